#include "selfdocseg/ssl.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>

#include "selfdocseg/blob_io.hpp"
#include "selfdocseg/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace selfdocseg::ssl {

const char* to_string(Optimizer o) {
  return o == Optimizer::lars ? "lars" : "sgd_momentum";
}
const char* to_string(FocalVariant v) {
  return v == FocalVariant::paper ? "paper" : "standard";
}
const char* to_string(LossMode m) {
  switch (m) {
    case LossMode::sim_only: return "sim_only";
    case LossMode::det_only: return "det_only";
    default: return "combined";
  }
}
Optimizer optimizer_from_string(const std::string& s) {
  if (s == "lars") return Optimizer::lars;
  if (s == "sgd_momentum") return Optimizer::sgd_momentum;
  throw Error(ErrorCode::CONFIG_ERROR, "unknown optimizer: " + s);
}
FocalVariant focal_variant_from_string(const std::string& s) {
  if (s == "paper") return FocalVariant::paper;
  if (s == "standard") return FocalVariant::standard;
  throw Error(ErrorCode::CONFIG_ERROR, "unknown focal_variant: " + s);
}
LossMode loss_mode_from_string(const std::string& s) {
  if (s == "combined") return LossMode::combined;
  if (s == "sim_only") return LossMode::sim_only;
  if (s == "det_only") return LossMode::det_only;
  throw Error(ErrorCode::CONFIG_ERROR, "unknown loss_mode: " + s);
}

namespace {

constexpr double kCosFloor = 1e-12;

// cosine with a floored denominator; value clamped into [-1,1], gradient of
// the raw quotient.
double cosine_and_grad(const VectorXd& a, const VectorXd& b, VectorXd* da) {
  double na = a.norm(), nb = b.norm();
  double denom = std::max(na * nb, kCosFloor);
  double dot = a.dot(b);
  double c = dot / denom;
  if (da) {
    *da = b / denom;
    if (na > 0.0) *da -= (c / (na * na)) * a;
  }
  return std::clamp(c, -1.0, 1.0);
}

void check_batch(const model::EmbeddingBatch& a, const model::EmbeddingBatch& b) {
  if (a.n() != b.n() || a.object_ids != b.object_ids)
    throw Error(ErrorCode::BATCH_MISMATCH,
                "embedding batches disagree on n or object ids");
}

}  // namespace

void TrainConfig::validate() const {
  if (tau < 0.0 || tau > 1.0)
    throw Error(ErrorCode::CONFIG_ERROR, "tau must be in [0,1]");
  if (focal_alpha <= 0.0)
    throw Error(ErrorCode::CONFIG_ERROR, "focal_alpha must be > 0");
  if (focal_gamma < 0.0)
    throw Error(ErrorCode::CONFIG_ERROR, "focal_gamma must be >= 0");
  if (lr_init <= 0.0) throw Error(ErrorCode::CONFIG_ERROR, "lr_init must be > 0");
  if (epochs < 1) throw Error(ErrorCode::CONFIG_ERROR, "epochs must be >= 1");
  if (batch_size < 1) throw Error(ErrorCode::CONFIG_ERROR, "batch_size must be >= 1");
  if (weight_decay < 0.0)
    throw Error(ErrorCode::CONFIG_ERROR, "weight_decay must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0)
    throw Error(ErrorCode::CONFIG_ERROR, "momentum must be in [0,1)");
  if (lars_trust_coeff <= 0.0)
    throw Error(ErrorCode::CONFIG_ERROR, "lars_trust_coeff must be > 0");
  if (max_steps < 0 || checkpoint_every_epochs < 0)
    throw Error(ErrorCode::CONFIG_ERROR, "step/epoch limits must be >= 0");
}

TrainState make_train_state(const model::ModelConfig& mc, uint64_t seed) {
  TrainState st;
  st.rng = Rng(derive_seed(seed, "init"));
  st.online = model::make_online_model(mc, st.rng);
  st.momentum = model::make_target_model(st.online);
  return st;
}

double similarity_loss(const model::EmbeddingBatch& q1,
                       const model::EmbeddingBatch& q2,
                       const model::EmbeddingBatch& z1_tgt,
                       const model::EmbeddingBatch& z2_tgt, MatrixXd* dq1,
                       MatrixXd* dq2) {
  check_batch(q1, q2);
  check_batch(q1, z1_tgt);
  check_batch(q1, z2_tgt);
  const int n = q1.n();
  if (n < 1) throw Error(ErrorCode::BATCH_MISMATCH, "empty embedding batch");
  if (dq1) dq1->setZero(n, q1.dim());
  if (dq2) dq2->setZero(n, q2.dim());
  double loss = 0.0;
  for (int k = 0; k < n; ++k) {
    VectorXd g1, g2;
    double c1 = cosine_and_grad(q1.vectors.row(k).transpose(),
                                z2_tgt.vectors.row(k).transpose(),
                                dq1 ? &g1 : nullptr);
    double c2 = cosine_and_grad(q2.vectors.row(k).transpose(),
                                z1_tgt.vectors.row(k).transpose(),
                                dq2 ? &g2 : nullptr);
    loss += 4.0 - 2.0 * (c1 + c2);
    if (dq1) dq1->row(k) = (-2.0 / n) * g1.transpose();
    if (dq2) dq2->row(k) = (-2.0 / n) * g2.transpose();
  }
  return loss / n;
}

double focal_loss(const model::ProbMask& pred, const Bitmap& m, double alpha,
                  double gamma, FocalVariant variant, MatrixXd* dprob) {
  if (pred.h != m.height || pred.w != m.width)
    throw Error(ErrorCode::SHAPE_MISMATCH, "prob mask and target mask disagree");
  const long pos = m.popcount();
  if (pos == 0)
    throw Error(ErrorCode::EMPTY_MASK_NORMALIZER,
                "target mask has no positive pixel");
  const double wpos = alpha;
  const double wneg = variant == FocalVariant::paper ? alpha : 1.0 - alpha;
  const double inv_s = 1.0 / static_cast<double>(pos);
  if (dprob) dprob->setZero(1, pred.values.cols());
  double acc = 0.0;
  for (int y = 0; y < pred.h; ++y)
    for (int x = 0; x < pred.w; ++x) {
      Eigen::Index i = static_cast<Eigen::Index>(y) * pred.w + x;
      double p = pred.values(0, i);
      if (m.at(x, y)) {
        double q = 1.0 - p;
        double powg = std::pow(q, gamma);
        acc += wpos * powg * std::log(p);
        if (dprob) {
          double d = powg / p;
          if (gamma > 0.0) d -= gamma * std::pow(q, gamma - 1.0) * std::log(p);
          (*dprob)(0, i) = -inv_s * wpos * d;
        }
      } else {
        double powg = std::pow(p, gamma);
        acc += wneg * powg * std::log(1.0 - p);
        if (dprob) {
          double d = -powg / (1.0 - p);
          if (gamma > 0.0) d += gamma * std::pow(p, gamma - 1.0) * std::log(1.0 - p);
          (*dprob)(0, i) = -inv_s * wneg * d;
        }
      }
    }
  return -inv_s * acc;
}

double total_loss(double l_sim, double l_det) { return l_sim + l_det; }

double lr_schedule(int epoch, const TrainConfig& cfg) {
  if (epoch < 0 || epoch > cfg.epochs)
    throw Error(ErrorCode::CONFIG_ERROR, "epoch outside schedule");
  return 0.5 * cfg.lr_init *
         (1.0 + std::cos(M_PI * static_cast<double>(epoch) / cfg.epochs));
}

void optimizer_step(TrainState& state, const TrainConfig& cfg, double lr) {
  for (model::Tensor* t : state.online.tensors()) {
    if (!t->has_grad())
      throw Error(ErrorCode::SHAPE_MISMATCH, "online tensor without grad: " + t->name);
    MatrixXd& buf = state.opt_buffers[t->name];
    if (buf.size() == 0) buf = MatrixXd::Zero(t->value.rows(), t->value.cols());
    if (buf.rows() != t->value.rows() || buf.cols() != t->value.cols())
      throw Error(ErrorCode::SHAPE_MISMATCH, "optimizer buffer shape: " + t->name);
    MatrixXd update = t->grad + cfg.weight_decay * t->value;
    if (cfg.optimizer == Optimizer::lars) {
      double wn = t->value.norm();
      double gn = t->grad.norm();
      double local_lr = 1.0;
      if (wn > 0.0 && gn > 0.0)
        local_lr = cfg.lars_trust_coeff * wn / (gn + cfg.weight_decay * wn + 1e-12);
      buf = cfg.momentum * buf + update * local_lr;
    } else {
      buf = cfg.momentum * buf + update;
    }
    t->value -= lr * buf;
  }
}

void ema_update(model::TargetModel& target, const model::OnlineModel& online,
                double tau) {
  auto tgt = target.tensors();
  auto src = const_cast<model::OnlineModel&>(online).tensors();
  for (size_t i = 0; i < tgt.size(); ++i) {
    if (tgt[i]->name != src[i]->name ||
        tgt[i]->value.rows() != src[i]->value.rows() ||
        tgt[i]->value.cols() != src[i]->value.cols())
      throw Error(ErrorCode::SHAPE_MISMATCH, "ema tensor mismatch: " + tgt[i]->name);
    tgt[i]->value = tau * tgt[i]->value + (1.0 - tau) * src[i]->value;
  }
}

LossBreakdown train_step(TrainState& state, const std::vector<TrainItem>& batch,
                         const TrainConfig& cfg, double lr) {
  if (batch.empty()) throw Error(ErrorCode::BATCH_MISMATCH, "empty batch");
  const bool use_sim = cfg.loss_mode != LossMode::det_only;
  const bool use_det = cfg.loss_mode != LossMode::sim_only;
  const int n_items = static_cast<int>(batch.size());

  state.online.zero_grads();

  std::vector<model::EncoderCtx> ctx1(n_items), ctx2(n_items);
  std::vector<model::FeatureMap> f1(n_items), f2(n_items);
  std::vector<int> offsets(n_items + 1, 0);
  LossBreakdown lb;

  for (int i = 0; i < n_items; ++i) {
    f1[i] = model::encode(state.online.encoder, batch[i].v1, &ctx1[i]);
    f2[i] = model::encode(state.online.encoder, batch[i].v2, &ctx2[i]);
    offsets[i + 1] = offsets[i] + static_cast<int>(batch[i].feat_masks.size());
    lb.n_vanished += batch[i].n_vanished;
  }
  const int total_objects = offsets[n_items];

  // similarity branch
  model::MlpCtx proj_ctx1, proj_ctx2, pred_ctx1, pred_ctx2;
  MatrixXd dq1, dq2;
  model::EmbeddingBatch y1, y2, y1t, y2t;
  if (use_sim) {
    const int d = state.online.encoder.out_dim();
    y1.vectors.setZero(total_objects, d);
    y2.vectors.setZero(total_objects, d);
    y1t.vectors.setZero(total_objects, d);
    y2t.vectors.setZero(total_objects, d);
    for (int i = 0; i < n_items; ++i) {
      model::FeatureMap f1t = model::encode(state.momentum.encoder, batch[i].v1);
      model::FeatureMap f2t = model::encode(state.momentum.encoder, batch[i].v2);
      auto p1 = model::mask_pool(f1[i], batch[i].feat_masks);
      auto p2 = model::mask_pool(f2[i], batch[i].feat_masks);
      auto p1t = model::mask_pool(f1t, batch[i].feat_masks);
      auto p2t = model::mask_pool(f2t, batch[i].feat_masks);
      y1.vectors.middleRows(offsets[i], p1.n()) = p1.vectors;
      y2.vectors.middleRows(offsets[i], p2.n()) = p2.vectors;
      y1t.vectors.middleRows(offsets[i], p1t.n()) = p1t.vectors;
      y2t.vectors.middleRows(offsets[i], p2t.n()) = p2t.vectors;
    }
    for (int k = 0; k < total_objects; ++k) {
      y1.object_ids.push_back(k);
      y2.object_ids.push_back(k);
      y1t.object_ids.push_back(k);
      y2t.object_ids.push_back(k);
    }
    y1t.role = y2t.role = y1.role = y2.role = model::EmbeddingBatch::Role::pooled;

    auto z1 = model::project(state.online.projector, y1, &proj_ctx1);
    auto z2 = model::project(state.online.projector, y2, &proj_ctx2);
    auto q1 = model::predict(state.online.predictor, z1, &pred_ctx1);
    auto q2 = model::predict(state.online.predictor, z2, &pred_ctx2);
    auto z1t = model::project(state.momentum.projector, y1t);
    auto z2t = model::project(state.momentum.projector, y2t);
    lb.l_sim = similarity_loss(q1, q2, z1t, z2t, &dq1, &dq2);
    lb.n_objects_pooled = total_objects;
  }

  // layout branch
  std::vector<model::LayoutHeadCtx> hctx1(n_items), hctx2(n_items);
  std::vector<MatrixXd> dprob1(n_items), dprob2(n_items);
  if (use_det) {
    double acc = 0.0;
    const double scale = 1.0 / (2.0 * n_items);
    for (int i = 0; i < n_items; ++i) {
      auto pm1 = model::predict_layout(state.online.layout_head, f1[i], &hctx1[i]);
      auto pm2 = model::predict_layout(state.online.layout_head, f2[i], &hctx2[i]);
      acc += focal_loss(pm1, batch[i].feat_layout, cfg.focal_alpha, cfg.focal_gamma,
                        cfg.focal_variant, &dprob1[i]);
      acc += focal_loss(pm2, batch[i].feat_layout, cfg.focal_alpha, cfg.focal_gamma,
                        cfg.focal_variant, &dprob2[i]);
      dprob1[i] *= scale;
      dprob2[i] *= scale;
    }
    lb.l_det = acc / (2.0 * n_items);
  }
  lb.l_total = total_loss(lb.l_sim, lb.l_det);

  // backward into theta only
  MatrixXd dy1, dy2;
  if (use_sim) {
    MatrixXd dz1 = model::mlp_backward(state.online.predictor, pred_ctx1, dq1);
    MatrixXd dz2 = model::mlp_backward(state.online.predictor, pred_ctx2, dq2);
    dy1 = model::mlp_backward(state.online.projector, proj_ctx1, dz1);
    dy2 = model::mlp_backward(state.online.projector, proj_ctx2, dz2);
  }
  for (int i = 0; i < n_items; ++i) {
    MatrixXd df1 = MatrixXd::Zero(f1[i].values.rows(), f1[i].values.cols());
    MatrixXd df2 = MatrixXd::Zero(f2[i].values.rows(), f2[i].values.cols());
    if (use_sim) {
      int n_i = offsets[i + 1] - offsets[i];
      model::mask_pool_backward(batch[i].feat_masks,
                                dy1.middleRows(offsets[i], n_i), &df1);
      model::mask_pool_backward(batch[i].feat_masks,
                                dy2.middleRows(offsets[i], n_i), &df2);
    }
    if (use_det) {
      model::predict_layout_backward(state.online.layout_head, f1[i], hctx1[i],
                                     dprob1[i], &df1);
      model::predict_layout_backward(state.online.layout_head, f2[i], hctx2[i],
                                     dprob2[i], &df2);
    }
    model::encode_backward(state.online.encoder, ctx1[i], df1);
    model::encode_backward(state.online.encoder, ctx2[i], df2);
  }

  optimizer_step(state, cfg, lr);
  ema_update(state.momentum, state.online, cfg.tau);
  state.step += 1;
  return lb;
}

bool prepare_image(const RgbImage& img, const maskgen::MaskGenParams& mp,
                   int stride, PreparedImage* out) {
  RgbImage padded = img;
  int W = (img.width + stride - 1) / stride * stride;
  int H = (img.height + stride - 1) / stride * stride;
  if (W != img.width || H != img.height) {
    padded = RgbImage(W, H, 255);  // paper-colored padding
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        const uint8_t* p = img.at(x, y);
        padded.set(x, y, p[0], p[1], p[2]);
      }
  }
  Bitmap layout = maskgen::generate_layout_mask(padded, mp);
  maskgen::ObjectMaskSet comps;
  try {
    comps = maskgen::extract_object_masks(layout, mp.min_component_area_px);
  } catch (const Error& e) {
    if (e.code == ErrorCode::NO_COMPONENTS) return false;
    throw;
  }
  const int fh = H / stride, fw = W / stride;
  out->image = std::move(padded);
  out->feat_masks.clear();
  out->n_vanished = 0;
  for (const Bitmap& m : comps.masks) {
    auto down = maskgen::downsample_mask(m, fh, fw);
    if (!down) {
      ++out->n_vanished;
      continue;
    }
    out->feat_masks.push_back(std::move(*down));
  }
  if (out->feat_masks.empty()) return false;
  auto layout_down = maskgen::downsample_mask(layout, fh, fw);
  if (!layout_down) return false;
  out->feat_layout = std::move(*layout_down);
  return true;
}

namespace {

json model_config_json(const model::ModelConfig& mc) {
  return json{{"encoder_channels", mc.encoder_channels},
              {"proj_hidden", mc.proj_hidden},
              {"proj_out", mc.proj_out},
              {"pred_hidden", mc.pred_hidden},
              {"paper_dims", mc.paper_dims}};
}

model::ModelConfig model_config_from_json(const json& j) {
  model::ModelConfig mc;
  mc.encoder_channels = j.at("encoder_channels").get<std::vector<int>>();
  mc.proj_hidden = j.at("proj_hidden");
  mc.proj_out = j.at("proj_out");
  mc.pred_hidden = j.at("pred_hidden");
  mc.paper_dims = j.at("paper_dims");
  return mc;
}

json train_config_json(const TrainConfig& tc) {
  return json{{"lr_init", tc.lr_init},
              {"weight_decay", tc.weight_decay},
              {"epochs", tc.epochs},
              {"tau", tc.tau},
              {"focal_alpha", tc.focal_alpha},
              {"focal_gamma", tc.focal_gamma},
              {"optimizer", to_string(tc.optimizer)},
              {"lars_trust_coeff", tc.lars_trust_coeff},
              {"momentum", tc.momentum},
              {"batch_size", tc.batch_size},
              {"seed", tc.seed},
              {"focal_variant", to_string(tc.focal_variant)},
              {"loss_mode", to_string(tc.loss_mode)},
              {"max_steps", tc.max_steps},
              {"checkpoint_every_epochs", tc.checkpoint_every_epochs}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig tc;
  tc.lr_init = j.at("lr_init");
  tc.weight_decay = j.at("weight_decay");
  tc.epochs = j.at("epochs");
  tc.tau = j.at("tau");
  tc.focal_alpha = j.at("focal_alpha");
  tc.focal_gamma = j.at("focal_gamma");
  tc.optimizer = optimizer_from_string(j.at("optimizer"));
  tc.lars_trust_coeff = j.at("lars_trust_coeff");
  tc.momentum = j.at("momentum");
  tc.batch_size = j.at("batch_size");
  tc.seed = j.at("seed");
  tc.focal_variant = focal_variant_from_string(j.at("focal_variant"));
  tc.loss_mode = loss_mode_from_string(j.at("loss_mode"));
  tc.max_steps = j.at("max_steps");
  tc.checkpoint_every_epochs = j.at("checkpoint_every_epochs");
  return tc;
}

json maskgen_json(const maskgen::MaskGenParams& mp) {
  return json{{"threshold", mp.threshold},
              {"kernel_h", mp.kernel_h},
              {"kernel_w", mp.kernel_w},
              {"min_component_area_px", mp.min_component_area_px}};
}

maskgen::MaskGenParams maskgen_from_json(const json& j) {
  maskgen::MaskGenParams mp;
  mp.threshold = j.at("threshold");
  mp.kernel_h = j.at("kernel_h");
  mp.kernel_w = j.at("kernel_w");
  mp.min_component_area_px = j.at("min_component_area_px");
  return mp;
}

}  // namespace

void save_checkpoint(const TrainState& state, const PretrainOptions& opts,
                     const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IO_ERROR, "cannot create checkpoint dir: " + dir);

  json manifest;
  manifest["format"] = "selfdocseg-checkpoint-v1";
  manifest["step"] = state.step;
  manifest["epoch"] = state.epoch;
  manifest["rng_state"] = state.rng.serialize();
  manifest["config_hash"] = opts.config_hash;
  manifest["hyperparameters"] = opts.config_echo.is_null() ? json::object()
                                                           : opts.config_echo;
  manifest["model_config"] = model_config_json(state.online.config);
  manifest["train_config"] = train_config_json(opts.train);
  manifest["maskgen"] = maskgen_json(opts.maskgen);
  manifest["tensors"] = json::array();

  auto dump = [&](const std::string& prefix, const model::Tensor& t) {
    std::string full = prefix + t.name;
    std::string file = full + ".bin";
    detail::write_tensor_blob(t.value, (fs::path(dir) / file).string());
    manifest["tensors"].push_back(json{{"name", full},
                                       {"rows", t.value.rows()},
                                       {"cols", t.value.cols()},
                                       {"dtype", "f32"},
                                       {"file", file}});
  };
  for (const model::Tensor* t : state.online.tensors()) dump("online.", *t);
  for (const model::Tensor* t : state.momentum.tensors()) dump("momentum.", *t);
  for (const auto& [name, buf] : state.opt_buffers) {
    std::string full = "opt." + name;
    std::string file = full + ".bin";
    detail::write_tensor_blob(buf, (fs::path(dir) / file).string());
    manifest["tensors"].push_back(json{{"name", full},
                                       {"rows", buf.rows()},
                                       {"cols", buf.cols()},
                                       {"dtype", "f32"},
                                       {"file", file}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write checkpoint manifest");
  out << manifest.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& dir) {
  fs::path mpath = fs::path(dir) / "manifest.json";
  if (!fs::exists(mpath))
    throw Error(ErrorCode::MISSING_CHECKPOINT, "no checkpoint at " + dir);
  std::ifstream in(mpath);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IO_ERROR, "bad checkpoint manifest: " + std::string(e.what()));
  }

  Checkpoint ck;
  ck.model_config = model_config_from_json(manifest.at("model_config"));
  ck.train_config = train_config_from_json(manifest.at("train_config"));
  ck.maskgen_params = maskgen_from_json(manifest.at("maskgen"));
  ck.config_hash = manifest.value("config_hash", "");
  ck.config_echo = manifest.value("hyperparameters", json::object());

  ck.state = make_train_state(ck.model_config, 0);
  ck.state.step = manifest.at("step");
  ck.state.epoch = manifest.at("epoch");
  ck.state.rng = Rng::deserialize(manifest.at("rng_state"));

  std::map<std::string, json> entries;
  for (const auto& e : manifest.at("tensors")) entries[e.at("name")] = e;
  auto load_into = [&](const std::string& prefix, model::Tensor& t) {
    auto it = entries.find(prefix + t.name);
    if (it == entries.end())
      throw Error(ErrorCode::IO_ERROR, "checkpoint missing tensor " + prefix + t.name);
    const json& e = it->second;
    if (e.at("rows") != t.value.rows() || e.at("cols") != t.value.cols())
      throw Error(ErrorCode::SHAPE_MISMATCH, "checkpoint tensor shape: " + t.name);
    t.value = detail::read_tensor_blob((fs::path(dir) / e.at("file").get<std::string>()).string(),
                               t.value.rows(), t.value.cols());
  };
  for (model::Tensor* t : ck.state.online.tensors()) load_into("online.", *t);
  for (model::Tensor* t : ck.state.momentum.tensors()) load_into("momentum.", *t);
  for (const auto& [name, e] : entries) {
    if (name.rfind("opt.", 0) == 0) {
      ck.state.opt_buffers[name.substr(4)] = detail::read_tensor_blob(
          (fs::path(dir) / e.at("file").get<std::string>()).string(),
          e.at("rows").get<Eigen::Index>(), e.at("cols").get<Eigen::Index>());
    }
  }
  return ck;
}

PretrainResult pretrain(const PretrainOptions& opts,
                        const docgen::CorpusManifest& manifest,
                        const std::string& out_dir,
                        const std::string& resume_checkpoint) {
  opts.train.validate();
  opts.maskgen.validate();
  opts.augment.validate();
  model::ModelConfig mc = opts.model.resolved();

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IO_ERROR, "cannot create out dir: " + out_dir);

  std::vector<int> record_ids = manifest.split.train;
  if (record_ids.empty()) {
    record_ids.resize(manifest.records.size());
    for (size_t i = 0; i < record_ids.size(); ++i) record_ids[i] = static_cast<int>(i);
  }

  PretrainResult res;
  std::vector<std::optional<PreparedImage>> slots(record_ids.size());
  {
    std::atomic<size_t> next{0};
    std::exception_ptr err;
    std::mutex err_mutex;
    auto worker = [&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= record_ids.size()) return;
        try {
          RgbImage img = read_rgb_png(
              manifest.resolve(manifest.records.at(record_ids[i]).image_path));
          PreparedImage p;
          if (prepare_image(img, opts.maskgen, mc.stride(), &p))
            slots[i] = std::move(p);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
          return;
        }
      }
    };
    int n_workers = std::max(1, opts.workers);
    std::vector<std::thread> pool;
    for (int i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
  }
  std::vector<PreparedImage> prepared;
  for (auto& slot : slots) {
    if (slot) {
      prepared.push_back(std::move(*slot));
      ++res.images_used;
    } else {
      ++res.images_skipped;
    }
  }
  if (prepared.empty())
    throw Error(ErrorCode::NO_COMPONENTS, "no image with usable components");

  TrainState state;
  bool resuming = !resume_checkpoint.empty();
  if (resuming) {
    state = std::move(load_checkpoint(resume_checkpoint).state);
  } else {
    state = make_train_state(mc, opts.train.seed);
  }

  res.metrics_csv = (fs::path(out_dir) / "metrics.csv").string();
  std::ofstream csv(res.metrics_csv, resuming ? std::ios::app : std::ios::out);
  if (!csv) throw Error(ErrorCode::IO_ERROR, "cannot write " + res.metrics_csv);
  if (!resuming) {
    csv << "# config_hash=" << opts.config_hash << "\n";
    csv << "step,epoch,lr,l_sim,l_det,l_total,n_vanished\n";
  }

  const TrainConfig& tc = opts.train;
  char line[256];
  bool done = false;
  for (int epoch = state.epoch; epoch < tc.epochs && !done; ++epoch) {
    state.epoch = epoch;
    double lr = lr_schedule(epoch, tc);
    std::vector<int> order(prepared.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng order_rng(derive_seed(tc.seed, "order:epoch:" + std::to_string(epoch)));
    order_rng.shuffle(order);

    for (size_t pos = 0; pos < order.size() && !done; pos += tc.batch_size) {
      std::vector<TrainItem> batch;
      for (size_t j = pos; j < std::min(order.size(), pos + tc.batch_size); ++j) {
        const PreparedImage& p = prepared[order[j]];
        Rng aug_rng(derive_seed(tc.seed, "augment:epoch:" + std::to_string(epoch) +
                                             ":doc:" + std::to_string(order[j])));
        TrainItem item;
        auto views = augment::make_view_pair(p.image, opts.augment, aug_rng);
        item.v1 = std::move(views.first);
        item.v2 = std::move(views.second);
        item.feat_masks = p.feat_masks;
        item.feat_layout = p.feat_layout;
        item.n_vanished = p.n_vanished;
        batch.push_back(std::move(item));
      }
      LossBreakdown lb = train_step(state, batch, tc, lr);
      std::snprintf(line, sizeof(line), "%lld,%d,%.10g,%.10g,%.10g,%.10g,%d\n",
                    static_cast<long long>(state.step), epoch, lr, lb.l_sim,
                    lb.l_det, lb.l_total, lb.n_vanished);
      csv << line;
      if (tc.max_steps > 0 && state.step >= tc.max_steps) done = true;
    }
    state.epoch = epoch + 1;
    if (tc.checkpoint_every_epochs > 0 &&
        (epoch + 1) % tc.checkpoint_every_epochs == 0 && epoch + 1 < tc.epochs) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoint_epoch_%04d", epoch + 1);
      save_checkpoint(state, opts, (fs::path(out_dir) / name).string());
    }
  }
  csv.flush();

  res.checkpoint_dir = (fs::path(out_dir) / "checkpoint").string();
  save_checkpoint(state, opts, res.checkpoint_dir);
  return res;
}

}  // namespace selfdocseg::ssl
