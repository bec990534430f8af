#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "selfdocseg/config.hpp"

using namespace selfdocseg;
using namespace selfdocseg::cli;
using json = nlohmann::json;
namespace fs = std::filesystem;

TEST_CASE("defaults match the documented values") {
  RunConfig cfg = RunConfig::defaults();
  CHECK(cfg.maskgen.threshold == 239);
  CHECK(cfg.maskgen.kernel_h == 5);
  CHECK(cfg.maskgen.kernel_w == 5);
  CHECK(cfg.maskgen.min_component_area_px == 16);
  CHECK(cfg.train.lr_init == 0.2);
  CHECK(cfg.train.weight_decay == 0.0005);
  CHECK(cfg.train.epochs == 50);
  CHECK(cfg.train.tau == 0.99);
  CHECK(cfg.train.focal_alpha == 0.25);
  CHECK(cfg.train.focal_gamma == 2.0);
  CHECK(cfg.train.optimizer == ssl::Optimizer::lars);
  CHECK(cfg.train.lars_trust_coeff == 0.001);
  CHECK(cfg.train.batch_size == 8);
  CHECK(cfg.train.focal_variant == ssl::FocalVariant::paper);
  CHECK(cfg.model.encoder_channels == std::vector<int>{32, 64, 128, 256});
  CHECK(cfg.model.proj_out == 256);
  CHECK(cfg.model.stride() == 16);
  CHECK(cfg.page.width_px == 256);
  CHECK(cfg.page.background_gray == 255);
  CHECK(cfg.augment.blur_prob == 0.5);
  CHECK(cfg.augment.jitter_prob == 0.8);
  CHECK(cfg.augment.drop_prob == 0.2);
  CHECK(cfg.augment.solarize_prob == 0.2);
  CHECK(cfg.eval.iou_thresh == 0.5);
  CHECK(cfg.eval.fractions == std::vector<double>{0.1, 0.5, 1.0});
  CHECK(cfg.eval.seeds == std::vector<uint64_t>{1, 2, 3});
}

TEST_CASE("unknown keys are rejected with their path") {
  json j = {{"train", {{"foo", 1}}}};
  try {
    RunConfig::from_json(j);
    FAIL("expected CONFIG_ERROR");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::CONFIG_ERROR);
    CHECK(std::string(e.what()).find("train.foo") != std::string::npos);
  }

  json top = {{"bogus_section", json::object()}};
  try {
    RunConfig::from_json(top);
    FAIL("expected CONFIG_ERROR");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("bogus_section") != std::string::npos);
  }
}

TEST_CASE("bad value types are rejected with their path") {
  json j = {{"maskgen", {{"threshold", "high"}}}};
  try {
    RunConfig::from_json(j);
    FAIL("expected CONFIG_ERROR");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::CONFIG_ERROR);
    CHECK(std::string(e.what()).find("maskgen.threshold") != std::string::npos);
  }
}

TEST_CASE("values out of range fail validation") {
  json j = {{"train", {{"tau", 1.5}}}};
  CHECK_THROWS_AS(RunConfig::from_json(j), Error);
  json j2 = {{"maskgen", {{"kernel_h", 4}}}};
  CHECK_THROWS_AS(RunConfig::from_json(j2), Error);
}

TEST_CASE("config parses overrides and derives stage seeds") {
  json j = {{"seed", 99},
            {"docgen", {{"width_px", 128}, {"height_px", 128}, {"count", 12},
                        {"object_classes", json::array({"TEXT_BLOCK", "TABLE"})}}},
            {"train", {{"epochs", 3}, {"optimizer", "sgd_momentum"},
                       {"loss_mode", "sim_only"}}}};
  RunConfig cfg = RunConfig::from_json(j);
  CHECK(cfg.seed == 99);
  CHECK(cfg.page.width_px == 128);
  CHECK(cfg.corpus_count == 12);
  CHECK(cfg.page.object_classes == std::vector<int>{docgen::TEXT_BLOCK, docgen::TABLE});
  CHECK(cfg.train.epochs == 3);
  CHECK(cfg.train.optimizer == ssl::Optimizer::sgd_momentum);
  CHECK(cfg.train.loss_mode == ssl::LossMode::sim_only);
  CHECK(cfg.page.seed == derive_seed(99, "docgen"));
  CHECK(cfg.train.seed == derive_seed(99, "train"));
  CHECK(cfg.page.seed != cfg.train.seed);
}

TEST_CASE("hash is stable and sensitive") {
  RunConfig a = RunConfig::defaults();
  RunConfig b = RunConfig::defaults();
  CHECK(a.hash() == b.hash());
  b.train.epochs = 51;
  CHECK(a.hash() != b.hash());
  RunConfig c = RunConfig::defaults();
  c.seed = 1;
  c.derive_seeds();
  CHECK(a.hash() != c.hash());
}

TEST_CASE("round-trip through the resolved echo") {
  json j = {{"seed", 5}, {"train", {{"epochs", 7}}}};
  RunConfig cfg = RunConfig::from_json(j);
  json echo = cfg.to_json();
  RunConfig cfg2 = RunConfig::from_json(echo);
  CHECK(cfg2.hash() == cfg.hash());
  CHECK(cfg2.train.seed == cfg.train.seed);
}

TEST_CASE("file loading errors") {
  CHECK_THROWS_AS(RunConfig::from_file("/nonexistent/config.json"), Error);
  fs::path bad = fs::temp_directory_path() / "selfdocseg_bad_config.json";
  std::ofstream(bad) << "{ not json";
  try {
    RunConfig::from_file(bad.string());
    FAIL("expected CONFIG_ERROR");
  } catch (const Error& e) {
    CHECK(e.code == ErrorCode::CONFIG_ERROR);
  }
  fs::remove(bad);
}
