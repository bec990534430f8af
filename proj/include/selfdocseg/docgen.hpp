#pragma once

#include <string>
#include <vector>

#include "selfdocseg/rng.hpp"
#include "selfdocseg/types.hpp"

namespace selfdocseg::docgen {

enum ObjectClass : int {
  TEXT_BLOCK = 0,
  FIGURE = 1,
  TABLE = 2,
  TITLE = 3,
};
inline constexpr int kNumClasses = 4;

const char* class_name(int label);
int class_from_name(const std::string& name);  // throws CONFIG_ERROR

struct PageSpec {
  int width_px = 256;
  int height_px = 256;
  int n_objects_min = 2;
  int n_objects_max = 5;
  std::vector<int> object_classes = {TEXT_BLOCK, FIGURE, TABLE, TITLE};
  int background_gray = 255;
  uint64_t seed = 0;

  void validate() const;  // throws CONFIG_ERROR
};

struct GtObject {
  Bitmap mask;  // filled region, page-sized
  int label = TEXT_BLOCK;
  Box bbox;  // tight bounding box of mask
};

struct GroundTruth {
  std::vector<GtObject> objects;
};

struct ManifestObject {
  Box bbox;
  int label = TEXT_BLOCK;
  std::string mask_path;
};

struct ManifestRecord {
  std::string image_path;
  std::vector<ManifestObject> objects;
};

struct Split {
  std::vector<int> train, val, test;
};

struct CorpusManifest {
  std::vector<ManifestRecord> records;
  Split split;
  std::string config_hash;
  std::string base_dir;  // set on load; paths are relative to it

  std::string resolve(const std::string& rel) const;
  void save(const std::string& path) const;
  // Checks that every referenced file exists.
  static CorpusManifest load(const std::string& path);
};

std::pair<RgbImage, GroundTruth> generate_document(const PageSpec& spec, Rng& rng);

CorpusManifest generate_corpus(const PageSpec& spec, int count,
                               const std::string& out_dir,
                               const std::string& config_hash = "");

// Loads the ground truth of one record (mask rasters rebuilt from bboxes when
// mask files are absent; with mask files, read from disk).
GroundTruth load_ground_truth(const CorpusManifest& m, int record_idx);

}  // namespace selfdocseg::docgen
