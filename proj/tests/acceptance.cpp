// Acceptance suite. Each criterion prints exactly one line:
//   [criterion N] PASS|FAIL - detail
// Run all with no arguments or a single one with --criterion N.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include "oracles.hpp"
#include "selfdocseg/config.hpp"
#include "selfdocseg/evalkit.hpp"
#include "selfdocseg/png_io.hpp"
#include "selfdocseg/ssl.hpp"

namespace fs = std::filesystem;
using namespace selfdocseg;
using Eigen::MatrixXd;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

fs::path scratch_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("selfdocseg_acceptance_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

model::EmbeddingBatch batch_of(const MatrixXd& rows, model::EmbeddingBatch::Role role) {
  model::EmbeddingBatch b;
  b.vectors = rows;
  b.role = role;
  for (int i = 0; i < rows.rows(); ++i) b.object_ids.push_back(i);
  return b;
}

MatrixXd randn(int r, int c, Rng& rng) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Bitmap random_nonempty_mask(int w, int h, Rng& rng, double p = 0.4) {
  Bitmap m(w, h);
  long count = 0;
  while (count == 0) {
    for (auto& v : m.px) v = rng.bernoulli(p) ? 1 : 0;
    count = m.popcount();
  }
  return m;
}

// ---------------------------------------------------------------------------
// criterion 1: equation oracles
// ---------------------------------------------------------------------------

bool criterion1(std::string* detail) {
  auto t0 = Clock::now();
  Rng rng(101);

  double worst_pool = 0.0;
  for (int t = 0; t < 500; ++t) {
    int c = 1 + static_cast<int>(rng.uniform_int(0, 7));
    int h = 2 + static_cast<int>(rng.uniform_int(0, 5));
    int w = 2 + static_cast<int>(rng.uniform_int(0, 5));
    model::FeatureMap f;
    f.c = c;
    f.h = h;
    f.w = w;
    f.values = randn(c, h * w, rng);
    int n = 1 + static_cast<int>(rng.uniform_int(0, 3));
    std::vector<Bitmap> masks;
    for (int k = 0; k < n; ++k) masks.push_back(random_nonempty_mask(w, h, rng));

    std::vector<std::vector<std::vector<double>>> grid(
        c, std::vector<std::vector<double>>(h, std::vector<double>(w)));
    for (int ch = 0; ch < c; ++ch)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) grid[ch][y][x] = f.values(ch, y * w + x);
    auto expect = oracles::brute_mask_pool(grid, masks);
    model::EmbeddingBatch got = model::mask_pool(f, masks);
    for (int k = 0; k < n; ++k)
      for (int ch = 0; ch < c; ++ch) {
        double e = expect[k][ch];
        double rel = std::fabs(got.vectors(k, ch) - e) / std::max(1.0, std::fabs(e));
        worst_pool = std::max(worst_pool, rel);
      }
  }
  if (worst_pool > 1e-6) {
    *detail = "mask_pool deviates from brute force by " + std::to_string(worst_pool);
    return false;
  }

  // focal-loss worked examples, frozen by hand evaluation
  auto probmask = [](std::initializer_list<double> vals, int h, int w) {
    model::ProbMask p;
    p.h = h;
    p.w = w;
    p.values = MatrixXd(1, static_cast<Eigen::Index>(vals.size()));
    int i = 0;
    for (double v : vals) p.values(0, i++) = v;
    return p;
  };
  Bitmap m10(2, 1);
  m10.px = {1, 0};
  double ex1 = ssl::focal_loss(probmask({1.0 - 1e-6, 1e-6}, 1, 2), m10, 0.25, 2.0);
  Bitmap one(1, 1);
  one.px = {1};
  double ex2 = ssl::focal_loss(probmask({0.5}, 1, 1), one, 1.0, 0.0);
  double ex3 = ssl::focal_loss(probmask({0.9, 0.1}, 1, 2), m10, 0.25, 2.0);
  bool focal_ok = ex1 < 1e-4 &&
                  std::fabs(ex2 - 0.6931471805599453) <= 1e-9 &&
                  std::fabs(ex3 - 5.268025782891315e-4) <= 1e-9;
  if (!focal_ok) {
    *detail = "focal examples: " + std::to_string(ex1) + ", " + std::to_string(ex2) +
              ", " + std::to_string(ex3);
    return false;
  }

  // similarity corners
  MatrixXd base(2, 3);
  base << 1, 0, 0, 0, 2, 0;
  auto q1 = batch_of(base, model::EmbeddingBatch::Role::predicted);
  auto q2 = batch_of(2.0 * base, model::EmbeddingBatch::Role::predicted);
  auto z_pos = batch_of(0.5 * base, model::EmbeddingBatch::Role::projected);
  MatrixXd orth(2, 3);
  orth << 0, 1, 0, 0, 0, 1;
  auto z_orth = batch_of(orth, model::EmbeddingBatch::Role::projected);
  auto z_neg = batch_of(-base, model::EmbeddingBatch::Role::projected);
  double s0 = ssl::similarity_loss(q1, q2, z_pos, z_pos);
  double s4 = ssl::similarity_loss(q1, q2, z_orth, z_orth);
  double s8 = ssl::similarity_loss(q1, q2, z_neg, z_neg);
  bool sim_ok = std::fabs(s0 - 0.0) <= 1e-9 && std::fabs(s4 - 4.0) <= 1e-9 &&
                std::fabs(s8 - 8.0) <= 1e-9;
  if (!sim_ok) {
    *detail = "similarity corners: " + std::to_string(s0) + ", " +
              std::to_string(s4) + ", " + std::to_string(s8);
    return false;
  }

  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "mask_pool rel<=%.2e on 500 cases; focal/sim corners exact; %.1fs",
                worst_pool, secs);
  *detail = buf;
  return secs < 60.0;
}

// ---------------------------------------------------------------------------
// criterion 2: gradient checks
// ---------------------------------------------------------------------------

struct GradStats {
  int instances = 0;
  double worst = 0.0;
  bool ok = true;

  void absorb(double analytic, double fd) {
    double denom = std::max({std::fabs(analytic), std::fabs(fd), 1e-7});
    double rel = std::fabs(analytic - fd) / denom;
    worst = std::max(worst, rel);
    if (std::fabs(analytic - fd) > 1e-7 && rel > 1e-4) ok = false;
  }
};

bool criterion2(std::string* detail) {
  auto t0 = Clock::now();
  GradStats stats;
  Rng rng(202);

  // (a) L_Sim w.r.t. q inputs, direct
  for (int t = 0; t < 8; ++t) {
    int n = 1 + static_cast<int>(rng.uniform_int(0, 3));
    int d = 2 + static_cast<int>(rng.uniform_int(0, 6));
    auto q1 = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::predicted);
    auto q2 = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::predicted);
    auto z1 = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::projected);
    auto z2 = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::projected);
    MatrixXd dq1, dq2;
    ssl::similarity_loss(q1, q2, z1, z2, &dq1, &dq2);
    auto loss = [&]() { return ssl::similarity_loss(q1, q2, z1, z2); };
    for (Eigen::Index i = 0; i < q1.vectors.size(); ++i)
      stats.absorb(dq1.data()[i], oracles::central_diff(loss, &q1.vectors.data()[i]));
    for (Eigen::Index i = 0; i < q2.vectors.size(); ++i)
      stats.absorb(dq2.data()[i], oracles::central_diff(loss, &q2.vectors.data()[i]));
    ++stats.instances;
  }

  // (b) L_Sim w.r.t. z inputs and through projector/predictor
  for (int t = 0; t < 8; ++t) {
    int n = 2 + static_cast<int>(rng.uniform_int(0, 2));
    int d = 4 + static_cast<int>(rng.uniform_int(0, 4));
    model::ModelConfig mc;
    mc.encoder_channels = {d};  // feature dim without using the encoder
    mc.proj_hidden = 6;
    mc.proj_out = d;
    mc.pred_hidden = 6;
    model::OnlineModel m;
    MatrixXd y1m, y2m;
    for (;; rng.next_u64()) {
      Rng init(rng.next_u64());
      m = model::make_online_model(mc, init);
      y1m = randn(n, d, init);
      y2m = randn(n, d, init);
      model::MlpCtx c1, c2, c3, c4;
      auto z1 = model::project(m.projector, batch_of(y1m, model::EmbeddingBatch::Role::pooled), &c1);
      auto z2 = model::project(m.projector, batch_of(y2m, model::EmbeddingBatch::Role::pooled), &c2);
      model::predict(m.predictor, z1, &c3);
      model::predict(m.predictor, z2, &c4);
      double margin = std::min({c1.hhat.cwiseAbs().minCoeff(), c2.hhat.cwiseAbs().minCoeff(),
                                c3.hhat.cwiseAbs().minCoeff(), c4.hhat.cwiseAbs().minCoeff()});
      if (margin > 1e-3) break;
    }
    auto y1 = batch_of(y1m, model::EmbeddingBatch::Role::pooled);
    auto y2 = batch_of(y2m, model::EmbeddingBatch::Role::pooled);
    auto z1t = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::projected);
    auto z2t = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::projected);

    auto forward = [&]() {
      auto z1 = model::project(m.projector, y1);
      auto z2 = model::project(m.projector, y2);
      auto q1 = model::predict(m.predictor, z1);
      auto q2 = model::predict(m.predictor, z2);
      return ssl::similarity_loss(q1, q2, z1t, z2t);
    };

    model::MlpCtx pc1, pc2, qc1, qc2;
    auto z1 = model::project(m.projector, y1, &pc1);
    auto z2 = model::project(m.projector, y2, &pc2);
    auto q1 = model::predict(m.predictor, z1, &qc1);
    auto q2 = model::predict(m.predictor, z2, &qc2);
    MatrixXd dq1, dq2;
    ssl::similarity_loss(q1, q2, z1t, z2t, &dq1, &dq2);
    m.zero_grads();
    MatrixXd dz1 = model::mlp_backward(m.predictor, qc1, dq1);
    MatrixXd dz2 = model::mlp_backward(m.predictor, qc2, dq2);
    MatrixXd dy1 = model::mlp_backward(m.projector, pc1, dz1);
    MatrixXd dy2 = model::mlp_backward(m.projector, pc2, dz2);

    // gradients w.r.t. the projector/predictor weights
    for (model::Tensor* t2 : {&m.projector.w1, &m.projector.b2, &m.predictor.w1,
                              &m.predictor.w2, &m.predictor.b1}) {
      for (int rep = 0; rep < 4; ++rep) {
        Eigen::Index i = rng.uniform_int(0, t2->value.size() - 1);
        stats.absorb(t2->grad.data()[i],
                     oracles::central_diff(forward, &t2->value.data()[i]));
      }
    }
    // gradients w.r.t. the pooled inputs (through both heads)
    for (Eigen::Index i = 0; i < y1.vectors.size(); ++i)
      stats.absorb(dy1.data()[i], oracles::central_diff(forward, &y1.vectors.data()[i]));
    for (Eigen::Index i = 0; i < y2.vectors.size(); ++i)
      stats.absorb(dy2.data()[i], oracles::central_diff(forward, &y2.vectors.data()[i]));

    // gradients w.r.t. the z inputs of the predictor alone
    auto z_free = batch_of(z1.vectors, model::EmbeddingBatch::Role::projected);
    auto pred_loss = [&]() {
      auto q = model::predict(m.predictor, z_free);
      return ssl::similarity_loss(q, q2, z1t, z2t);
    };
    model::MlpCtx qc;
    auto qf = model::predict(m.predictor, z_free, &qc);
    MatrixXd dqf, unused;
    ssl::similarity_loss(qf, q2, z1t, z2t, &dqf, &unused);
    m.predictor.w1.zero_grad();
    m.predictor.b1.zero_grad();
    m.predictor.w2.zero_grad();
    m.predictor.b2.zero_grad();
    MatrixXd dz_free = model::mlp_backward(m.predictor, qc, dqf);
    for (Eigen::Index i = 0; i < z_free.vectors.size(); ++i)
      stats.absorb(dz_free.data()[i],
                   oracles::central_diff(pred_loss, &z_free.vectors.data()[i]));
    ++stats.instances;
  }

  // (c) L_Det w.r.t. logits and 1x1 conv weights
  for (int t = 0; t < 8; ++t) {
    int h = 2 + static_cast<int>(rng.uniform_int(0, 2));
    int w = h;
    int c = 2 + static_cast<int>(rng.uniform_int(0, 6));
    Bitmap m = random_nonempty_mask(w, h, rng);

    // logits as a free variable
    MatrixXd logits = randn(1, h * w, rng);
    auto focal_of_logits = [&]() {
      model::ProbMask p;
      p.h = h;
      p.w = w;
      p.values = (1.0 / (1.0 + (-logits.array()).exp()))
                     .cwiseMax(model::kProbClamp)
                     .cwiseMin(1.0 - model::kProbClamp)
                     .matrix();
      return ssl::focal_loss(p, m, 0.25, 2.0);
    };
    model::ProbMask p;
    p.h = h;
    p.w = w;
    MatrixXd sig = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
    p.values = sig.cwiseMax(model::kProbClamp).cwiseMin(1.0 - model::kProbClamp);
    MatrixXd dprob;
    ssl::focal_loss(p, m, 0.25, 2.0, ssl::FocalVariant::paper, &dprob);
    MatrixXd dlogits = (dprob.array() * sig.array() * (1.0 - sig.array())).matrix();
    for (Eigen::Index i = 0; i < logits.size(); ++i)
      stats.absorb(dlogits.data()[i],
                   oracles::central_diff(focal_of_logits, &logits.data()[i]));

    // 1x1 conv head weights
    model::ModelConfig mc;
    mc.encoder_channels = {c};
    Rng init(rng.next_u64());
    model::OnlineModel om = model::make_online_model(mc, init);
    om.layout_head.w.value *= 0.3;
    model::FeatureMap f;
    f.c = c;
    f.h = h;
    f.w = w;
    f.values = randn(c, h * w, rng);
    auto head_loss = [&]() {
      return ssl::focal_loss(model::predict_layout(om.layout_head, f), m, 0.25, 2.0);
    };
    model::LayoutHeadCtx hctx;
    auto pm = model::predict_layout(om.layout_head, f, &hctx);
    MatrixXd dp;
    ssl::focal_loss(pm, m, 0.25, 2.0, ssl::FocalVariant::paper, &dp);
    om.zero_grads();
    MatrixXd dfeat = MatrixXd::Zero(c, h * w);
    model::predict_layout_backward(om.layout_head, f, hctx, dp, &dfeat);
    for (Eigen::Index i = 0; i < om.layout_head.w.value.size(); ++i)
      stats.absorb(om.layout_head.w.grad.data()[i],
                   oracles::central_diff(head_loss, &om.layout_head.w.value.data()[i]));
    stats.absorb(om.layout_head.b.grad(0, 0),
                 oracles::central_diff(head_loss, &om.layout_head.b.value(0, 0)));
    ++stats.instances;
  }

  double secs = seconds_since(t0);
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d instances, worst rel err %.2e; %.1fs",
                stats.instances, stats.worst, secs);
  *detail = buf;
  return stats.ok && stats.instances >= 20 && secs < 120.0;
}

// ---------------------------------------------------------------------------
// criterion 3: loss bounds, stop-gradient, EMA contraction
// ---------------------------------------------------------------------------

bool criterion3(std::string* detail) {
  auto t0 = Clock::now();
  Rng rng(303);
  for (int t = 0; t < 1000; ++t) {
    int n = 1 + static_cast<int>(rng.uniform_int(0, 4));
    int d = 2 + static_cast<int>(rng.uniform_int(0, 6));
    auto q1 = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::predicted);
    auto q2 = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::predicted);
    auto z1 = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::projected);
    auto z2 = batch_of(randn(n, d, rng), model::EmbeddingBatch::Role::projected);
    double l = ssl::similarity_loss(q1, q2, z1, z2);
    if (l < 0.0 || l > 8.0) {
      *detail = "similarity loss out of [0,8]: " + std::to_string(l);
      return false;
    }
  }

  // stop-gradient: perturbing xi changes the loss value, yet xi carries no
  // gradient storage at all
  model::ModelConfig mc;
  mc.encoder_channels = {4, 6};
  mc.proj_hidden = 5;
  mc.proj_out = 4;
  mc.pred_hidden = 5;
  maskgen::MaskGenParams mp;
  docgen::PageSpec spec;
  spec.width_px = spec.height_px = 64;
  spec.n_objects_min = 1;
  spec.n_objects_max = 2;
  Rng doc_rng(7);
  auto [img, gt] = docgen::generate_document(spec, doc_rng);
  ssl::PreparedImage prep;
  if (!ssl::prepare_image(img, mp, mc.stride(), &prep)) {
    *detail = "internal: prepared image has no components";
    return false;
  }
  ssl::TrainItem item;
  item.v1 = prep.image;
  item.v2 = prep.image;
  item.feat_masks = prep.feat_masks;
  item.feat_layout = prep.feat_layout;
  ssl::TrainConfig tc;
  tc.tau = 1.0;

  ssl::TrainState st = ssl::make_train_state(mc, 1);
  auto loss_of = [&](const ssl::TrainState& s) {
    ssl::TrainState copy = s;
    return ssl::train_step(copy, {item}, tc, 0.0).l_sim;
  };
  double base = loss_of(st);
  ssl::TrainState perturbed = st;
  perturbed.momentum.projector.w2.value.array() += 0.5;
  double moved = loss_of(perturbed);
  bool value_sensitive = std::fabs(moved - base) > 1e-12;

  ssl::TrainState trained = st;
  ssl::train_step(trained, {item}, tc, 0.01);
  bool grads_absent = true;
  for (const model::Tensor* t : trained.momentum.tensors())
    if (t->has_grad()) grads_absent = false;

  if (!value_sensitive || !grads_absent) {
    *detail = std::string("stop-gradient: value_sensitive=") +
              (value_sensitive ? "yes" : "no") + " grads_absent=" +
              (grads_absent ? "yes" : "no");
    return false;
  }

  // EMA contraction over K = 100 steps
  ssl::TrainState ema = ssl::make_train_state(mc, 2);
  for (model::Tensor* t : ema.online.tensors()) t->value.array() += 1.0;
  auto distance = [&]() {
    double acc = 0.0;
    auto tgt = ema.momentum.tensors();
    auto src = ema.online.tensors();
    for (size_t i = 0; i < tgt.size(); ++i)
      acc += (tgt[i]->value - src[i]->value).squaredNorm();
    return std::sqrt(acc);
  };
  double d0 = distance();
  const double tau = 0.99;
  const int K = 100;
  for (int k = 0; k < K; ++k) ssl::ema_update(ema.momentum, ema.online, tau);
  double dK = distance();
  double expect = std::pow(tau, K) * d0;
  if (std::fabs(dK - expect) > 1e-6) {
    *detail = "EMA contraction off: " + std::to_string(dK) + " vs " +
              std::to_string(expect);
    return false;
  }

  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "1000 batches in [0,8]; xi grad-free; EMA contraction %.2e; %.1fs",
                std::fabs(dK - expect), seconds_since(t0));
  *detail = buf;
  return true;
}

// ---------------------------------------------------------------------------
// criterion 4: mask pipeline oracle on 200 synthetic pages
// ---------------------------------------------------------------------------

bool criterion4(std::string* detail) {
  auto t0 = Clock::now();
  docgen::PageSpec spec;  // defaults: 256x256, 2..5 objects, all classes
  spec.seed = 20240809;
  maskgen::MaskGenParams params;

  int total_objects = 0, intersected = 0, well_matched = 0;
  for (int page = 0; page < 200; ++page) {
    Rng rng(derive_seed(spec.seed, "acceptance4:" + std::to_string(page)));
    auto [img, gt] = docgen::generate_document(spec, rng);
    Bitmap mask = maskgen::generate_layout_mask(img, params);
    maskgen::ObjectMaskSet comps =
        maskgen::extract_object_masks(mask, params.min_component_area_px);

    // all (object, component) overlaps
    struct Pair {
      double iou;
      int obj, comp;
    };
    std::vector<Pair> pairs;
    std::vector<bool> obj_hit(gt.objects.size(), false);
    for (size_t oi = 0; oi < gt.objects.size(); ++oi)
      for (size_t ci = 0; ci < comps.masks.size(); ++ci) {
        double v = evalkit::iou(gt.objects[oi].mask, comps.masks[ci]);
        if (v > 0.0) obj_hit[oi] = true;
        pairs.push_back({v, static_cast<int>(oi), static_cast<int>(ci)});
      }
    std::stable_sort(pairs.begin(), pairs.end(),
                     [](const Pair& a, const Pair& b) { return a.iou > b.iou; });
    std::vector<bool> obj_used(gt.objects.size(), false);
    std::vector<bool> comp_used(comps.masks.size(), false);
    for (const Pair& p : pairs) {
      if (p.iou <= 0.0 || obj_used[p.obj] || comp_used[p.comp]) continue;
      obj_used[p.obj] = true;
      comp_used[p.comp] = true;
      if (p.iou >= 0.5) ++well_matched;
    }
    for (bool hit : obj_hit) intersected += hit ? 1 : 0;
    total_objects += static_cast<int>(gt.objects.size());
  }

  double secs = seconds_since(t0);
  double frac_hit = static_cast<double>(intersected) / total_objects;
  double frac_matched = static_cast<double>(well_matched) / total_objects;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "%d objects: intersect=%.1f%% greedy IoU>=0.5=%.1f%%; %.1fs",
                total_objects, 100.0 * frac_hit, 100.0 * frac_matched, secs);
  *detail = buf;
  return frac_hit == 1.0 && frac_matched >= 0.9 && secs < 120.0;
}

// ---------------------------------------------------------------------------
// criterion 5: training sanity
// ---------------------------------------------------------------------------

bool criterion5(std::string* detail) {
  auto t0 = Clock::now();
  fs::path dir = scratch_dir("c5");
  docgen::PageSpec spec;
  spec.width_px = spec.height_px = 64;
  spec.n_objects_min = 1;
  spec.n_objects_max = 3;
  spec.seed = 55;
  auto manifest = docgen::generate_corpus(spec, 64, (dir / "corpus").string());
  manifest.split.train.clear();  // pretrain on all 64 pages

  ssl::PretrainOptions opts;  // desk defaults: LARS, lr 0.2, batch 8
  opts.train.epochs = 38;     // 64/8 = 8 steps per epoch -> stops at step 300
  opts.train.max_steps = 300;
  opts.train.seed = 5;
  ssl::PretrainResult res = ssl::pretrain(opts, manifest, (dir / "run").string());

  std::ifstream csv(res.metrics_csv);
  std::string line;
  std::getline(csv, line);  // config hash comment
  std::getline(csv, line);  // header
  std::vector<double> totals;
  bool finite = true;
  while (std::getline(csv, line)) {
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 7) continue;
    for (int idx : {3, 4, 5}) {
      double v = std::stod(fields[static_cast<size_t>(idx)]);
      if (!std::isfinite(v)) finite = false;
    }
    totals.push_back(std::stod(fields[5]));
  }
  double secs = seconds_since(t0);
  if (totals.size() < 300) {
    *detail = "only " + std::to_string(totals.size()) + " steps logged";
    fs::remove_all(dir);
    return false;
  }
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += totals[static_cast<size_t>(i)];
    last += totals[totals.size() - 10 + static_cast<size_t>(i)];
  }
  first /= 10.0;
  last /= 10.0;
  fs::remove_all(dir);

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "%zu steps; mean L_total first10=%.3f last10=%.3f (ratio %.2f); "
                "finite=%s; %.0fs",
                totals.size(), first, last, last / first, finite ? "yes" : "no",
                secs);
  *detail = buf;
  return finite && last <= 0.7 * first && secs < 600.0;
}

// ---------------------------------------------------------------------------
// shared machinery for criteria 6 and 7
// ---------------------------------------------------------------------------

struct ArmRun {
  std::string arm;
  ssl::LossMode loss_mode;
  uint64_t seed;
  fs::path out_dir;
};

void pretrain_arms_parallel(const cli::RunConfig& cfg,
                            const docgen::CorpusManifest& manifest,
                            const std::vector<ArmRun>& runs, int jobs) {
  std::atomic<size_t> next{0};
  std::exception_ptr err;
  std::mutex err_mutex;
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= runs.size()) return;
      try {
        const ArmRun& r = runs[i];
        ssl::PretrainOptions opts;
        opts.model = cfg.model;
        opts.train = cfg.train;
        opts.train.loss_mode = r.loss_mode;
        opts.train.seed = derive_seed(
            cfg.seed, "acceptance:pretrain:" + r.arm + ":" + std::to_string(r.seed));
        opts.augment = cfg.augment;
        opts.maskgen = cfg.maskgen;
        ssl::pretrain(opts, manifest, r.out_dir.string());
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!err) err = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// Desk-scale study configuration shared by the two directional criteria.
cli::RunConfig ablation_config(const fs::path& root) {
  cli::RunConfig cfg = cli::RunConfig::defaults();
  cfg.seed = 606;
  cfg.output_root = root.string();
  cfg.page.width_px = cfg.page.height_px = 64;
  cfg.page.n_objects_min = 1;
  cfg.page.n_objects_max = 3;
  cfg.corpus_count = 96;
  cfg.train.epochs = 24;  // 77 train pages / batch 8 -> 240 steps
  cfg.train.batch_size = 8;
  cfg.eval.seeds = {1, 2, 3};
  cfg.eval.probe_epochs = 60;
  cfg.derive_seeds();
  cfg.validate();
  return cfg;
}

bool criterion6(std::string* detail) {
  auto t0 = Clock::now();
  fs::path dir = scratch_dir("c6");
  cli::RunConfig cfg = ablation_config(dir);
  auto manifest =
      docgen::generate_corpus(cfg.page, cfg.corpus_count, (dir / "corpus").string());

  std::vector<std::pair<std::string, ssl::LossMode>> arms = {
      {"combined", ssl::LossMode::combined},
      {"det_only", ssl::LossMode::det_only},
      {"sim_only", ssl::LossMode::sim_only}};
  std::vector<ArmRun> runs;
  for (const auto& [arm, lm] : arms)
    for (uint64_t seed : cfg.eval.seeds)
      runs.push_back({arm, lm, seed, dir / arm / ("seed_" + std::to_string(seed))});
  pretrain_arms_parallel(cfg, manifest, runs, 2);

  std::vector<evalkit::AblationArmSpec> specs;
  for (const auto& [arm, lm] : arms) {
    evalkit::AblationArmSpec spec;
    spec.name = arm;
    for (uint64_t seed : cfg.eval.seeds)
      spec.checkpoints[seed] =
          (dir / arm / ("seed_" + std::to_string(seed)) / "checkpoint").string();
    specs.push_back(std::move(spec));
  }
  evalkit::AblationArmSpec random_arm;
  random_arm.name = "random";
  for (uint64_t seed : cfg.eval.seeds) {
    fs::path ck = dir / "random" / ("seed_" + std::to_string(seed)) / "checkpoint";
    ssl::TrainState st = ssl::make_train_state(
        cfg.model, derive_seed(cfg.seed, "acceptance:random:" + std::to_string(seed)));
    ssl::PretrainOptions opts;
    opts.model = cfg.model;
    ssl::save_checkpoint(st, opts, ck.string());
    random_arm.checkpoints[seed] = ck.string();
  }
  specs.push_back(std::move(random_arm));

  evalkit::AblationReport report =
      evalkit::ablation_harness("loss_ablation", manifest, specs, cfg.eval);

  double combined = 0, det_only = 0, sim_only = 0, random_iou = 0;
  double combined_sd = 0, det_sd = 0, sim_sd = 0, random_sd = 0;
  for (const auto& arm : report.arms) {
    if (arm.name == "combined") combined = arm.mean_iou, combined_sd = arm.sd_iou;
    if (arm.name == "det_only") det_only = arm.mean_iou, det_sd = arm.sd_iou;
    if (arm.name == "sim_only") sim_only = arm.mean_iou, sim_sd = arm.sd_iou;
    if (arm.name == "random") random_iou = arm.mean_iou, random_sd = arm.sd_iou;
  }
  fs::remove_all(dir);
  double secs = seconds_since(t0);
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "pixel-IoU combined=%.3f+-%.3f det_only=%.3f+-%.3f "
                "sim_only=%.3f+-%.3f random=%.3f+-%.3f; %.0fs",
                combined, combined_sd, det_only, det_sd, sim_only, sim_sd,
                random_iou, random_sd, secs);
  *detail = buf;
  return combined >= det_only && sim_only > random_iou && secs < 2700.0;
}

bool criterion7(std::string* detail) {
  auto t0 = Clock::now();
  fs::path dir = scratch_dir("c7");
  cli::RunConfig cfg = ablation_config(dir);
  auto manifest =
      docgen::generate_corpus(cfg.page, cfg.corpus_count, (dir / "corpus").string());

  std::vector<ArmRun> runs;
  for (uint64_t seed : cfg.eval.seeds)
    runs.push_back({"combined", ssl::LossMode::combined, seed,
                    dir / "combined" / ("seed_" + std::to_string(seed))});
  pretrain_arms_parallel(cfg, manifest, runs, 2);

  std::vector<evalkit::AblationArmSpec> specs;
  for (double f : cfg.eval.fractions) {
    evalkit::AblationArmSpec spec;
    char name[32];
    std::snprintf(name, sizeof(name), "frac_%03d", static_cast<int>(f * 100 + 0.5));
    spec.name = name;
    spec.fraction = f;
    for (uint64_t seed : cfg.eval.seeds)
      spec.checkpoints[seed] =
          (dir / "combined" / ("seed_" + std::to_string(seed)) / "checkpoint").string();
    specs.push_back(std::move(spec));
  }
  evalkit::AblationReport report =
      evalkit::ablation_harness("semi_supervised", manifest, specs, cfg.eval);
  fs::remove_all(dir);

  std::vector<double> means;
  std::string table;
  for (const auto& arm : report.arms) {
    means.push_back(arm.mean_iou);
    char part[64];
    std::snprintf(part, sizeof(part), "%s=%.3f+-%.3f ", arm.name.c_str(),
                  arm.mean_iou, arm.sd_iou);
    table += part;
  }
  bool monotone = means.size() == 3 && means[0] <= means[1] && means[1] <= means[2];
  double secs = seconds_since(t0);
  char buf[256];
  std::snprintf(buf, sizeof(buf), "pixel-IoU %s; %.0fs", table.c_str(), secs);
  *detail = buf;
  return monotone && secs < 1800.0;
}

// ---------------------------------------------------------------------------
// criterion 8: AP metric oracle
// ---------------------------------------------------------------------------

bool criterion8(std::string* detail) {
  auto t0 = Clock::now();
  Rng rng(808);
  const int W = 12, H = 12;
  double worst = 0.0;
  for (int t = 0; t < 200; ++t) {
    int n_gt = static_cast<int>(rng.uniform_int(0, 5));
    int n_det = static_cast<int>(rng.uniform_int(0, 10));
    docgen::GroundTruth gt;
    auto random_box = [&]() {
      int x0 = static_cast<int>(rng.uniform_int(0, 7));
      int y0 = static_cast<int>(rng.uniform_int(0, 7));
      Box b{x0, y0, std::min(x0 + static_cast<int>(rng.uniform_int(1, 4)), W - 1),
            std::min(y0 + static_cast<int>(rng.uniform_int(1, 4)), H - 1)};
      return b;
    };
    auto rect = [&](Box b) {
      Bitmap m(W, H, 0);
      for (int y = b.y0; y <= b.y1; ++y)
        for (int x = b.x0; x <= b.x1; ++x) m.at(x, y) = 1;
      return m;
    };
    for (int g = 0; g < n_gt; ++g) {
      docgen::GtObject o;
      o.bbox = random_box();
      o.label = static_cast<int>(rng.uniform_int(0, 2));
      o.mask = rect(o.bbox);
      gt.objects.push_back(std::move(o));
    }
    std::vector<evalkit::Detection> dets;
    for (int d = 0; d < n_det; ++d) {
      evalkit::Detection det;
      det.mask = rect(random_box());
      det.score = rng.uniform();
      det.label = static_cast<int>(rng.uniform_int(0, 2));
      dets.push_back(std::move(det));
    }
    double ours = evalkit::compute_ap(dets, gt, 0.5);
    double brute = oracles::brute_ap(dets, gt, 0.5);
    worst = std::max(worst, std::fabs(ours - brute));
  }
  double secs = seconds_since(t0);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "200 cases, max |diff| = %.1e; %.1fs", worst, secs);
  *detail = buf;
  return worst <= 1e-15 && secs < 60.0;
}

// ---------------------------------------------------------------------------
// criterion 9: pipeline determinism through the CLI
// ---------------------------------------------------------------------------

#ifndef SELFDOCSEG_CLI
#define SELFDOCSEG_CLI "selfdocseg"
#endif

bool criterion9(std::string* detail) {
  auto t0 = Clock::now();
  fs::path dir = scratch_dir("c9");
  nlohmann::json config = {
      {"seed", 17},
      {"output_root", "unused"},
      {"docgen", {{"width_px", 64}, {"height_px", 64}, {"n_objects_min", 1},
                  {"n_objects_max", 2}, {"count", 12}}},
      {"model", {{"encoder_channels", nlohmann::json::array({8, 12, 16, 24})},
                 {"proj_hidden", 32}, {"proj_out", 16}, {"pred_hidden", 32}}},
      {"train", {{"epochs", 4}, {"batch_size", 4}}},
      {"eval", {{"probe_epochs", 12}, {"seeds", nlohmann::json::array({1})}}}};
  fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << config.dump(2);

  auto run_pipeline = [&](const fs::path& root) {
    std::string base = std::string(SELFDOCSEG_CLI) + " ";
    std::string tail = " --config " + cfg_path.string() + " --out " + root.string() +
                       " >/dev/null 2>&1";
    for (const std::string& sub :
         {std::string("gen-data"),
          "make-mask --input " + (root / "corpus").string() + " --output " +
              (root / "masks").string(),
          std::string("pretrain"), std::string("probe"), std::string("evaluate")}) {
      int status = std::system((base + sub + tail).c_str());
      if (WEXITSTATUS(status) != 0) return false;
    }
    return true;
  };

  if (!run_pipeline(dir / "run_a") || !run_pipeline(dir / "run_b")) {
    *detail = "pipeline run failed";
    fs::remove_all(dir);
    return false;
  }

  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  std::string manifest_a = slurp(dir / "run_a" / "corpus" / "manifest.json");
  std::string manifest_b = slurp(dir / "run_b" / "corpus" / "manifest.json");
  std::string report_a = slurp(dir / "run_a" / "eval" / "report.json");
  std::string report_b = slurp(dir / "run_b" / "eval" / "report.json");

  // metric logs compared field-by-field at 1e-6
  auto parse_csv = [](const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    while (std::getline(in, line)) {
      std::stringstream ss(line);
      std::string field;
      std::vector<double> row;
      while (std::getline(ss, field, ',')) row.push_back(std::stod(field));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  auto rows_a = parse_csv(dir / "run_a" / "pretrain" / "metrics.csv");
  auto rows_b = parse_csv(dir / "run_b" / "pretrain" / "metrics.csv");
  bool metrics_equal = rows_a.size() == rows_b.size() && !rows_a.empty();
  double worst = 0.0;
  if (metrics_equal)
    for (size_t i = 0; i < rows_a.size(); ++i) {
      if (rows_a[i].size() != rows_b[i].size()) metrics_equal = false;
      for (size_t j = 0; metrics_equal && j < rows_a[i].size(); ++j)
        worst = std::max(worst, std::fabs(rows_a[i][j] - rows_b[i][j]));
    }
  metrics_equal = metrics_equal && worst <= 1e-6;

  // run_b config echoes differ only in output_root; strip it before comparing
  auto normalize_report = [](std::string s, const std::string& root) {
    size_t pos;
    while ((pos = s.find(root)) != std::string::npos) s.erase(pos, root.size());
    return s;
  };
  report_a = normalize_report(report_a, (dir / "run_a").string());
  report_b = normalize_report(report_b, (dir / "run_b").string());

  bool ok = manifest_a == manifest_b && !manifest_a.empty() && metrics_equal &&
            report_a == report_b && !report_a.empty();
  fs::remove_all(dir);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "manifests %s, metric logs max|diff|=%.1e, reports %s; %.0fs",
                manifest_a == manifest_b ? "identical" : "DIFFER", worst,
                report_a == report_b ? "identical" : "DIFFER", seconds_since(t0));
  *detail = buf;
  return ok;
}

using CriterionFn = bool (*)(std::string*);

struct Entry {
  int id;
  const char* label;
  CriterionFn fn;
};

const Entry kCriteria[] = {
    {1, "equation oracles", criterion1},
    {2, "gradient checks", criterion2},
    {3, "loss bounds and stop-gradient", criterion3},
    {4, "mask pipeline oracle", criterion4},
    {5, "training sanity", criterion5},
    {6, "ablation direction", criterion6},
    {7, "semi-supervised direction", criterion7},
    {8, "AP metric oracle", criterion8},
    {9, "determinism", criterion9},
};

}  // namespace

int main(int argc, char** argv) {
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc)
      only = std::atoi(argv[i + 1]);
  }
  int failures = 0;
  for (const Entry& e : kCriteria) {
    if (only != 0 && e.id != only) continue;
    std::string detail;
    bool ok = false;
    try {
      ok = e.fn(&detail);
    } catch (const std::exception& ex) {
      detail = std::string("exception: ") + ex.what();
    }
    std::printf("[criterion %d] %s - %s (%s)\n", e.id, ok ? "PASS" : "FAIL",
                e.label, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
