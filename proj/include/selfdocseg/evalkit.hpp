#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfdocseg/docgen.hpp"
#include "selfdocseg/model.hpp"

namespace selfdocseg::evalkit {

using Eigen::MatrixXd;

struct EvalConfig {
  double prob_threshold = 0.5;
  int min_area = 16;        // image-resolution pixels
  double iou_thresh = 0.5;  // AP matching threshold
  std::vector<double> fractions = {0.1, 0.5, 1.0};
  std::vector<uint64_t> seeds = {1, 2, 3};
  int probe_epochs = 60;
  double probe_lr = 0.2;
  double probe_momentum = 0.9;
  double probe_weight_decay = 1e-4;

  void validate() const;
};

// 1x1 conv over frozen features: d -> 1 background + n_classes logits.
struct ProbeHead {
  MatrixXd w;  // (1 + n_classes) x d
  MatrixXd b;  // (1 + n_classes) x 1
  int n_classes = 0;

  int rows() const { return n_classes + 1; }
};

struct Detection {
  Bitmap mask;
  double score = 0.0;
  int label = 0;
};

struct EvalReport {
  double pixel_iou = 0.0;  // macro mean IoU over foreground classes
  double pixel_f1 = 0.0;   // macro mean F1 over foreground classes
  double ap_at_50 = 0.0;   // mean over test images of per-image mAP
  // Per-class entries; -1 marks a class absent from both prediction and truth.
  std::vector<double> class_iou, class_f1, class_ap;
  int n_images = 0;
  uint64_t seed = 0;

  nlohmann::json to_json() const;
};

// |a AND b| / |a OR b|, with 0/0 defined as 0.
double iou(const Bitmap& a, const Bitmap& b);

// Score-ordered greedy matching at the given IoU threshold, all-point
// interpolated AP per class, mean over the union of classes present in
// detections or ground truth. No GT and no detections gives 1.0; detections
// with no GT give 0.0.
double compute_ap(const std::vector<Detection>& dets,
                  const docgen::GroundTruth& gts, double iou_thresh);

// Frozen-encoder feature cache entry for one labeled record.
struct ProbeSample {
  model::FeatureMap features;
  std::vector<int> cell_labels;  // h*w entries, 0 = background, c+1 = class c
  docgen::GroundTruth gt;        // at padded-image resolution
  int image_w = 0, image_h = 0;  // padded dims
};

ProbeSample make_probe_sample(const model::Encoder& encoder, const RgbImage& img,
                              const docgen::GroundTruth& gt);

struct ProbeTrainLog {
  std::vector<double> epoch_loss;
};

// Trains the head on the first ceil(fraction*N) seed-shuffled train records;
// the encoder is const and never touched.
ProbeHead train_probe(const model::Encoder& encoder,
                      const docgen::CorpusManifest& manifest, double fraction,
                      const EvalConfig& cfg, uint64_t seed,
                      ProbeTrainLog* log = nullptr);

// Dense probe output -> instances: per class, upsample the probability map
// to image resolution (nearest cell), threshold, take 8-connected components
// of at least min_area pixels, score each by its mean probability.
std::vector<Detection> segment(const RgbImage& image, const model::Encoder& encoder,
                               const ProbeHead& head, double prob_threshold,
                               int min_area);

// Same conversion from an explicit (1+n_classes) x (fh*fw) probability matrix.
std::vector<Detection> segment_probs(const MatrixXd& probs, int fh, int fw,
                                     int stride, int image_w, int image_h,
                                     double prob_threshold, int min_area);

EvalReport evaluate_probe(const model::Encoder& encoder, const ProbeHead& head,
                          const docgen::CorpusManifest& manifest,
                          const std::vector<int>& record_ids, const EvalConfig& cfg);

void save_probe_head(const ProbeHead& head, const std::string& dir,
                     const std::string& config_hash);
ProbeHead load_probe_head(const std::string& dir);

// --- ablation harness ---------------------------------------------------------

struct AblationArmSpec {
  std::string name;
  std::map<uint64_t, std::string> checkpoints;  // seed -> checkpoint dir
  double fraction = 1.0;
};

struct ArmResult {
  std::string name;
  double fraction = 1.0;
  double mean_iou = 0, sd_iou = 0;
  double mean_f1 = 0, sd_f1 = 0;
  double mean_ap = 0, sd_ap = 0;
  std::vector<EvalReport> per_seed;
};

struct AblationReport {
  std::string mode;  // "semi_supervised" or "loss_ablation"
  std::vector<ArmResult> arms;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Requires every (arm, seed) checkpoint to exist (MISSING_CHECKPOINT
// otherwise); probes each over cfg.seeds and aggregates mean +- sd.
AblationReport ablation_harness(const std::string& mode,
                                const docgen::CorpusManifest& manifest,
                                const std::vector<AblationArmSpec>& arms,
                                const EvalConfig& cfg);

// Colored translucent overlays, bbox outlines and class labels.
void visualize(const RgbImage& image, const std::vector<Detection>& dets,
               const std::string& out_path);

}  // namespace selfdocseg::evalkit
