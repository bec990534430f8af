#pragma once

#include <string>

#include <json.hpp>

#include "selfdocseg/augment.hpp"
#include "selfdocseg/docgen.hpp"
#include "selfdocseg/evalkit.hpp"
#include "selfdocseg/maskgen.hpp"
#include "selfdocseg/model.hpp"
#include "selfdocseg/ssl.hpp"

namespace selfdocseg::cli {

// One declarative config for the whole pipeline. Unknown keys are rejected
// with their full path; per-stage seeds fan out from the single global seed.
struct RunConfig {
  uint64_t seed = 0;
  std::string output_root = "out";
  docgen::PageSpec page;
  int corpus_count = 200;
  maskgen::MaskGenParams maskgen;
  augment::AugmentConfig augment;
  model::ModelConfig model;
  ssl::TrainConfig train;
  evalkit::EvalConfig eval;

  static RunConfig defaults();
  static RunConfig from_json(const nlohmann::json& j);  // throws CONFIG_ERROR
  static RunConfig from_file(const std::string& path);

  nlohmann::json to_json() const;  // fully resolved echo
  std::string hash() const;        // stable hex digest of the resolved config

  // Re-derives page.seed and train.seed from the global seed. Called by the
  // parsers and again after CLI overrides change `seed`.
  void derive_seeds();
  void validate() const;
};

}  // namespace selfdocseg::cli
