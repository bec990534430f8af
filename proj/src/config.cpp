#include "selfdocseg/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

using json = nlohmann::json;

namespace selfdocseg::cli {

namespace {

// Strict view over one JSON object: every key must be consumed.
class StrictObject {
 public:
  StrictObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object())
      throw Error(ErrorCode::CONFIG_ERROR, path_ + " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T* out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      *out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::CONFIG_ERROR, "bad value type at " + member(key));
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string member(const char* key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw Error(ErrorCode::CONFIG_ERROR, "unknown config key: " + member(it.key().c_str()));
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<std::string> class_names(const std::vector<int>& ids) {
  std::vector<std::string> out;
  for (int id : ids) out.emplace_back(docgen::class_name(id));
  return out;
}

std::vector<int> class_ids(const std::vector<std::string>& names,
                           const std::string& path) {
  std::vector<int> out;
  for (const auto& n : names) {
    try {
      out.push_back(docgen::class_from_name(n));
    } catch (const Error&) {
      throw Error(ErrorCode::CONFIG_ERROR, "unknown object class at " + path);
    }
  }
  return out;
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig cfg;
  cfg.derive_seeds();
  return cfg;
}

void RunConfig::derive_seeds() {
  page.seed = derive_seed(seed, "docgen");
  train.seed = derive_seed(seed, "train");
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig cfg;
  StrictObject root(j, "");
  root.get("seed", &cfg.seed);
  root.get("output_root", &cfg.output_root);

  if (root.has("docgen")) {
    StrictObject s(root.raw("docgen"), "docgen");
    s.get("width_px", &cfg.page.width_px);
    s.get("height_px", &cfg.page.height_px);
    s.get("n_objects_min", &cfg.page.n_objects_min);
    s.get("n_objects_max", &cfg.page.n_objects_max);
    s.get("background_gray", &cfg.page.background_gray);
    s.get("count", &cfg.corpus_count);
    if (s.has("object_classes")) {
      std::vector<std::string> names;
      try {
        names = s.raw("object_classes").get<std::vector<std::string>>();
      } catch (const json::exception&) {
        throw Error(ErrorCode::CONFIG_ERROR, "bad value type at docgen.object_classes");
      }
      cfg.page.object_classes = class_ids(names, "docgen.object_classes");
    }
    s.finish();
  }

  if (root.has("maskgen")) {
    StrictObject s(root.raw("maskgen"), "maskgen");
    s.get("threshold", &cfg.maskgen.threshold);
    s.get("kernel_h", &cfg.maskgen.kernel_h);
    s.get("kernel_w", &cfg.maskgen.kernel_w);
    s.get("min_component_area_px", &cfg.maskgen.min_component_area_px);
    s.finish();
  }

  if (root.has("augment")) {
    StrictObject s(root.raw("augment"), "augment");
    s.get("blur_prob", &cfg.augment.blur_prob);
    s.get("jitter_prob", &cfg.augment.jitter_prob);
    s.get("drop_prob", &cfg.augment.drop_prob);
    s.get("solarize_prob", &cfg.augment.solarize_prob);
    s.get("blur_sigma_min", &cfg.augment.blur_sigma_min);
    s.get("blur_sigma_max", &cfg.augment.blur_sigma_max);
    s.get("jitter_brightness", &cfg.augment.jitter_strengths.brightness);
    s.get("jitter_contrast", &cfg.augment.jitter_strengths.contrast);
    s.get("jitter_saturation", &cfg.augment.jitter_strengths.saturation);
    s.get("jitter_hue", &cfg.augment.jitter_strengths.hue);
    s.get("solarize_threshold", &cfg.augment.solarize_threshold);
    s.finish();
  }

  if (root.has("model")) {
    StrictObject s(root.raw("model"), "model");
    s.get("encoder_channels", &cfg.model.encoder_channels);
    s.get("proj_hidden", &cfg.model.proj_hidden);
    s.get("proj_out", &cfg.model.proj_out);
    s.get("pred_hidden", &cfg.model.pred_hidden);
    s.get("paper_dims", &cfg.model.paper_dims);
    s.finish();
  }

  if (root.has("train")) {
    StrictObject s(root.raw("train"), "train");
    s.get("lr_init", &cfg.train.lr_init);
    s.get("weight_decay", &cfg.train.weight_decay);
    s.get("epochs", &cfg.train.epochs);
    s.get("tau", &cfg.train.tau);
    s.get("focal_alpha", &cfg.train.focal_alpha);
    s.get("focal_gamma", &cfg.train.focal_gamma);
    s.get("lars_trust_coeff", &cfg.train.lars_trust_coeff);
    s.get("momentum", &cfg.train.momentum);
    s.get("batch_size", &cfg.train.batch_size);
    s.get("max_steps", &cfg.train.max_steps);
    s.get("checkpoint_every_epochs", &cfg.train.checkpoint_every_epochs);
    if (s.has("optimizer")) {
      std::string v;
      s.get("optimizer", &v);
      try {
        cfg.train.optimizer = ssl::optimizer_from_string(v);
      } catch (const Error&) {
        throw Error(ErrorCode::CONFIG_ERROR, "bad value at train.optimizer");
      }
    }
    if (s.has("focal_variant")) {
      std::string v;
      s.get("focal_variant", &v);
      try {
        cfg.train.focal_variant = ssl::focal_variant_from_string(v);
      } catch (const Error&) {
        throw Error(ErrorCode::CONFIG_ERROR, "bad value at train.focal_variant");
      }
    }
    if (s.has("loss_mode")) {
      std::string v;
      s.get("loss_mode", &v);
      try {
        cfg.train.loss_mode = ssl::loss_mode_from_string(v);
      } catch (const Error&) {
        throw Error(ErrorCode::CONFIG_ERROR, "bad value at train.loss_mode");
      }
    }
    s.finish();
  }

  if (root.has("eval")) {
    StrictObject s(root.raw("eval"), "eval");
    s.get("prob_threshold", &cfg.eval.prob_threshold);
    s.get("min_area", &cfg.eval.min_area);
    s.get("iou_thresh", &cfg.eval.iou_thresh);
    s.get("fractions", &cfg.eval.fractions);
    s.get("seeds", &cfg.eval.seeds);
    s.get("probe_epochs", &cfg.eval.probe_epochs);
    s.get("probe_lr", &cfg.eval.probe_lr);
    s.get("probe_momentum", &cfg.eval.probe_momentum);
    s.get("probe_weight_decay", &cfg.eval.probe_weight_decay);
    s.finish();
  }

  root.finish();
  cfg.derive_seeds();
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot read config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CONFIG_ERROR, "config is not valid JSON: " + std::string(e.what()));
  }
  return from_json(j);
}

void RunConfig::validate() const {
  page.validate();
  if (corpus_count < 1)
    throw Error(ErrorCode::CONFIG_ERROR, "docgen.count must be >= 1");
  maskgen.validate();
  augment.validate();
  model.validate();
  train.validate();
  eval.validate();
}

json RunConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["output_root"] = output_root;
  j["docgen"] = {{"width_px", page.width_px},
                 {"height_px", page.height_px},
                 {"n_objects_min", page.n_objects_min},
                 {"n_objects_max", page.n_objects_max},
                 {"object_classes", class_names(page.object_classes)},
                 {"background_gray", page.background_gray},
                 {"count", corpus_count}};
  j["maskgen"] = {{"threshold", maskgen.threshold},
                  {"kernel_h", maskgen.kernel_h},
                  {"kernel_w", maskgen.kernel_w},
                  {"min_component_area_px", maskgen.min_component_area_px}};
  j["augment"] = {{"blur_prob", augment.blur_prob},
                  {"jitter_prob", augment.jitter_prob},
                  {"drop_prob", augment.drop_prob},
                  {"solarize_prob", augment.solarize_prob},
                  {"blur_sigma_min", augment.blur_sigma_min},
                  {"blur_sigma_max", augment.blur_sigma_max},
                  {"jitter_brightness", augment.jitter_strengths.brightness},
                  {"jitter_contrast", augment.jitter_strengths.contrast},
                  {"jitter_saturation", augment.jitter_strengths.saturation},
                  {"jitter_hue", augment.jitter_strengths.hue},
                  {"solarize_threshold", augment.solarize_threshold}};
  j["model"] = {{"encoder_channels", model.encoder_channels},
                {"proj_hidden", model.proj_hidden},
                {"proj_out", model.proj_out},
                {"pred_hidden", model.pred_hidden},
                {"paper_dims", model.paper_dims}};
  j["train"] = {{"lr_init", train.lr_init},
                {"weight_decay", train.weight_decay},
                {"epochs", train.epochs},
                {"tau", train.tau},
                {"focal_alpha", train.focal_alpha},
                {"focal_gamma", train.focal_gamma},
                {"optimizer", ssl::to_string(train.optimizer)},
                {"lars_trust_coeff", train.lars_trust_coeff},
                {"momentum", train.momentum},
                {"batch_size", train.batch_size},
                {"focal_variant", ssl::to_string(train.focal_variant)},
                {"loss_mode", ssl::to_string(train.loss_mode)},
                {"max_steps", train.max_steps},
                {"checkpoint_every_epochs", train.checkpoint_every_epochs}};
  j["eval"] = {{"prob_threshold", eval.prob_threshold},
               {"min_area", eval.min_area},
               {"iou_thresh", eval.iou_thresh},
               {"fractions", eval.fractions},
               {"seeds", eval.seeds},
               {"probe_epochs", eval.probe_epochs},
               {"probe_lr", eval.probe_lr},
               {"probe_momentum", eval.probe_momentum},
               {"probe_weight_decay", eval.probe_weight_decay}};
  return j;
}

std::string RunConfig::hash() const {
  uint64_t h = fnv1a64(to_json().dump());
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace selfdocseg::cli
