#include "selfdocseg/model.hpp"

#include <cmath>

namespace selfdocseg::model {

namespace {

constexpr double kNormEps = 1e-5;

Tensor make_tensor(const std::string& name, int rows, int cols, bool with_grad) {
  Tensor t;
  t.name = name;
  t.value = MatrixXd::Zero(rows, cols);
  if (with_grad) t.alloc_grad();
  return t;
}

void he_init(Tensor& t, int fan_in, Rng& rng) {
  double std = std::sqrt(2.0 / fan_in);
  for (Eigen::Index i = 0; i < t.value.rows(); ++i)
    for (Eigen::Index j = 0; j < t.value.cols(); ++j)
      t.value(i, j) = rng.normal(0.0, std);
}

// out-position geometry for 3x3 stride-2 pad-1
int half(int n) { return (n + 2 - 3) / 2 + 1; }

void im2col_3x3s2(const MatrixXd& in, int hi, int wi, MatrixXd* cols) {
  const int ho = half(hi), wo = half(wi);
  const int cin = static_cast<int>(in.rows());
  cols->setZero(cin * 9, ho * wo);
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      int p = oy * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        int iy = oy * 2 - 1 + ky;
        if (iy < 0 || iy >= hi) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int ix = ox * 2 - 1 + kx;
          if (ix < 0 || ix >= wi) continue;
          for (int c = 0; c < cin; ++c)
            (*cols)(c * 9 + ky * 3 + kx, p) = in(c, iy * wi + ix);
        }
      }
    }
}

void col2im_3x3s2(const MatrixXd& dcols, int hi, int wi, MatrixXd* din) {
  const int ho = half(hi), wo = half(wi);
  const int cin = static_cast<int>(din->rows());
  for (int oy = 0; oy < ho; ++oy)
    for (int ox = 0; ox < wo; ++ox) {
      int p = oy * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        int iy = oy * 2 - 1 + ky;
        if (iy < 0 || iy >= hi) continue;
        for (int kx = 0; kx < 3; ++kx) {
          int ix = ox * 2 - 1 + kx;
          if (ix < 0 || ix >= wi) continue;
          for (int c = 0; c < cin; ++c)
            (*din)(c, iy * wi + ix) += dcols(c * 9 + ky * 3 + kx, p);
        }
      }
    }
}

}  // namespace

void ModelConfig::validate() const {
  if (encoder_channels.empty() || encoder_channels.size() > 6)
    throw Error(ErrorCode::CONFIG_ERROR, "encoder_channels must have 1..6 stages");
  for (int c : encoder_channels)
    if (c < 1) throw Error(ErrorCode::CONFIG_ERROR, "encoder channels must be >= 1");
  if (proj_hidden < 1 || proj_out < 1 || pred_hidden < 1)
    throw Error(ErrorCode::CONFIG_ERROR, "mlp dims must be >= 1");
}

ModelConfig ModelConfig::resolved() const {
  ModelConfig r = *this;
  if (paper_dims) {
    r.encoder_channels = {256, 512, 1024, 2048};
    r.proj_hidden = 4096;
    r.proj_out = 256;
    r.pred_hidden = 4096;
  }
  r.validate();
  return r;
}

std::vector<Tensor*> OnlineModel::tensors() {
  std::vector<Tensor*> out;
  for (auto& s : encoder.stages) {
    out.push_back(&s.w);
    out.push_back(&s.b);
    out.push_back(&s.gamma);
    out.push_back(&s.beta);
  }
  for (Tensor* t : {&projector.w1, &projector.b1, &projector.w2, &projector.b2,
                    &predictor.w1, &predictor.b1, &predictor.w2, &predictor.b2,
                    &layout_head.w, &layout_head.b})
    out.push_back(t);
  return out;
}

std::vector<const Tensor*> OnlineModel::tensors() const {
  auto mut = const_cast<OnlineModel*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

void OnlineModel::zero_grads() {
  for (Tensor* t : tensors()) t->zero_grad();
}

std::vector<Tensor*> TargetModel::tensors() {
  std::vector<Tensor*> out;
  for (auto& s : encoder.stages) {
    out.push_back(&s.w);
    out.push_back(&s.b);
    out.push_back(&s.gamma);
    out.push_back(&s.beta);
  }
  for (Tensor* t : {&projector.w1, &projector.b1, &projector.w2, &projector.b2})
    out.push_back(t);
  return out;
}

std::vector<const Tensor*> TargetModel::tensors() const {
  auto mut = const_cast<TargetModel*>(this)->tensors();
  return {mut.begin(), mut.end()};
}

namespace {

Encoder make_encoder(const ModelConfig& cfg, const std::string& prefix, Rng& rng,
                     bool with_grad) {
  Encoder enc;
  int in_ch = 3;
  for (size_t i = 0; i < cfg.encoder_channels.size(); ++i) {
    ConvStage s;
    s.in_ch = in_ch;
    s.out_ch = cfg.encoder_channels[i];
    std::string base = prefix + ".s" + std::to_string(i) + ".";
    s.w = make_tensor(base + "conv_w", s.out_ch, s.in_ch * 9, with_grad);
    s.b = make_tensor(base + "conv_b", s.out_ch, 1, with_grad);
    s.gamma = make_tensor(base + "norm_g", s.out_ch, 1, with_grad);
    s.beta = make_tensor(base + "norm_b", s.out_ch, 1, with_grad);
    he_init(s.w, s.in_ch * 9, rng);
    s.gamma.value.setOnes();
    enc.stages.push_back(std::move(s));
    in_ch = cfg.encoder_channels[i];
  }
  return enc;
}

Mlp make_mlp(int in, int hidden, int out, const std::string& prefix, Rng& rng,
             bool with_grad) {
  Mlp m;
  m.w1 = make_tensor(prefix + ".fc1_w", hidden, in, with_grad);
  m.b1 = make_tensor(prefix + ".fc1_b", hidden, 1, with_grad);
  m.w2 = make_tensor(prefix + ".fc2_w", out, hidden, with_grad);
  m.b2 = make_tensor(prefix + ".fc2_b", out, 1, with_grad);
  he_init(m.w1, in, rng);
  he_init(m.w2, hidden, rng);
  return m;
}

}  // namespace

OnlineModel make_online_model(const ModelConfig& cfg, Rng& rng) {
  ModelConfig r = cfg.resolved();
  OnlineModel m;
  m.config = r;
  m.encoder = make_encoder(r, "encoder", rng, true);
  int d = r.feature_dim();
  m.projector = make_mlp(d, r.proj_hidden, r.proj_out, "projector", rng, true);
  m.predictor = make_mlp(r.proj_out, r.pred_hidden, r.proj_out, "predictor", rng, true);
  m.layout_head.w = make_tensor("layout_head.w", 1, d, true);
  m.layout_head.b = make_tensor("layout_head.b", 1, 1, true);
  he_init(m.layout_head.w, d, rng);
  return m;
}

TargetModel make_target_model(const OnlineModel& online) {
  TargetModel t;
  t.encoder.stages.reserve(online.encoder.stages.size());
  for (const auto& s : online.encoder.stages) {
    ConvStage c;
    c.in_ch = s.in_ch;
    c.out_ch = s.out_ch;
    for (auto [dst, src] : {std::pair{&c.w, &s.w}, {&c.b, &s.b},
                            {&c.gamma, &s.gamma}, {&c.beta, &s.beta}}) {
      dst->name = src->name;
      dst->value = src->value;
    }
    t.encoder.stages.push_back(std::move(c));
  }
  for (auto [dst, src] :
       {std::pair{&t.projector.w1, &online.projector.w1},
        {&t.projector.b1, &online.projector.b1},
        {&t.projector.w2, &online.projector.w2},
        {&t.projector.b2, &online.projector.b2}}) {
    dst->name = src->name;
    dst->value = src->value;
  }
  return t;
}

FeatureMap encode(const Encoder& enc, const RgbImage& img, EncoderCtx* ctx) {
  const int stride = enc.stride();
  if (img.width % stride != 0 || img.height % stride != 0)
    throw Error(ErrorCode::SHAPE_ERROR,
                "image dims must be divisible by stride " + std::to_string(stride));
  const int H = img.height, W = img.width;
  MatrixXd x(3, static_cast<Eigen::Index>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int xx = 0; xx < W; ++xx) {
      const uint8_t* p = img.at(xx, y);
      for (int c = 0; c < 3; ++c)
        x(c, static_cast<Eigen::Index>(y) * W + xx) = p[c] / 255.0;
    }
  if (ctx) {
    ctx->input = x;
    ctx->h0 = H;
    ctx->w0 = W;
    ctx->stages.assign(enc.stages.size(), {});
  }

  int h = H, w = W;
  MatrixXd cur = std::move(x);
  StageCtx scratch;
  for (size_t i = 0; i < enc.stages.size(); ++i) {
    const ConvStage& s = enc.stages[i];
    StageCtx& sc = ctx ? ctx->stages[i] : scratch;
    sc.hi = h;
    sc.wi = w;
    sc.ho = half(h);
    sc.wo = half(w);
    im2col_3x3s2(cur, h, w, &sc.cols);
    MatrixXd z = s.w.value * sc.cols;
    z.colwise() += s.b.value.col(0);
    // per-channel normalization over spatial positions
    const double n = static_cast<double>(z.cols());
    sc.mean = z.rowwise().mean();
    MatrixXd centered = z.colwise() - sc.mean;
    VectorXd var = centered.array().square().rowwise().sum() / n;
    sc.inv_std = (var.array() + kNormEps).sqrt().inverse();
    sc.xhat = centered.array().colwise() * sc.inv_std.array();
    MatrixXd y = sc.xhat.array().colwise() * s.gamma.value.col(0).array();
    y.colwise() += s.beta.value.col(0);
    sc.out = y.cwiseMax(0.0);
    cur = sc.out;
    h = sc.ho;
    w = sc.wo;
  }
  FeatureMap f;
  f.values = std::move(cur);
  f.c = enc.out_dim();
  f.h = h;
  f.w = w;
  f.stride = stride;
  return f;
}

void encode_backward(Encoder& enc, const EncoderCtx& ctx, const MatrixXd& dfeat) {
  MatrixXd dcur = dfeat;
  for (int i = static_cast<int>(enc.stages.size()) - 1; i >= 0; --i) {
    ConvStage& s = enc.stages[i];
    const StageCtx& sc = ctx.stages[i];
    // relu
    MatrixXd dy = (sc.out.array() > 0.0).select(dcur, MatrixXd::Zero(dcur.rows(), dcur.cols()));
    // affine
    s.gamma.grad.col(0) += (dy.array() * sc.xhat.array()).rowwise().sum().matrix();
    s.beta.grad.col(0) += dy.rowwise().sum();
    MatrixXd dxhat = dy.array().colwise() * s.gamma.value.col(0).array();
    // normalization over spatial positions
    const double n = static_cast<double>(dy.cols());
    VectorXd mean_dxhat = dxhat.rowwise().mean();
    VectorXd mean_dxhat_xhat = (dxhat.array() * sc.xhat.array()).rowwise().sum() / n;
    MatrixXd dz = (dxhat.colwise() - mean_dxhat).array() -
                  (sc.xhat.array().colwise() * mean_dxhat_xhat.array());
    dz = dz.array().colwise() * sc.inv_std.array();
    // conv
    s.w.grad += dz * sc.cols.transpose();
    s.b.grad.col(0) += dz.rowwise().sum();
    if (i > 0) {
      MatrixXd dcols = s.w.value.transpose() * dz;
      const StageCtx& prev = ctx.stages[i - 1];
      MatrixXd din = MatrixXd::Zero(prev.out.rows(), prev.out.cols());
      col2im_3x3s2(dcols, sc.hi, sc.wi, &din);
      dcur = std::move(din);
    }
  }
}

EmbeddingBatch mask_pool(const FeatureMap& f, const std::vector<Bitmap>& masks) {
  EmbeddingBatch out;
  out.role = EmbeddingBatch::Role::pooled;
  out.vectors = MatrixXd::Zero(static_cast<Eigen::Index>(masks.size()), f.c);
  for (size_t k = 0; k < masks.size(); ++k) {
    const Bitmap& m = masks[k];
    if (m.width != f.w || m.height != f.h)
      throw Error(ErrorCode::SHAPE_MISMATCH, "mask does not match feature grid");
    VectorXd acc = VectorXd::Zero(f.c);
    long area = 0;
    for (int y = 0; y < f.h; ++y)
      for (int x = 0; x < f.w; ++x)
        if (m.at(x, y)) {
          acc += f.values.col(static_cast<Eigen::Index>(y) * f.w + x);
          ++area;
        }
    if (area == 0)
      throw Error(ErrorCode::EMPTY_MASK, "empty mask reached mask_pool");
    out.vectors.row(static_cast<Eigen::Index>(k)) = (acc / static_cast<double>(area)).transpose();
    out.object_ids.push_back(static_cast<int>(k));
  }
  return out;
}

void mask_pool_backward(const std::vector<Bitmap>& masks, const MatrixXd& d_vectors,
                        MatrixXd* dfeat) {
  for (size_t k = 0; k < masks.size(); ++k) {
    const Bitmap& m = masks[k];
    long area = m.popcount();
    if (area == 0) throw Error(ErrorCode::EMPTY_MASK, "empty mask in backward");
    VectorXd g = d_vectors.row(static_cast<Eigen::Index>(k)).transpose() /
                 static_cast<double>(area);
    for (int y = 0; y < m.height; ++y)
      for (int x = 0; x < m.width; ++x)
        if (m.at(x, y)) dfeat->col(static_cast<Eigen::Index>(y) * m.width + x) += g;
  }
}

namespace {

MatrixXd mlp_forward(const Mlp& mlp, const MatrixXd& x, MlpCtx* ctx) {
  MlpCtx scratch;
  MlpCtx& c = ctx ? *ctx : scratch;
  c.x = x;
  c.h = (x * mlp.w1.value.transpose()).rowwise() + mlp.b1.value.col(0).transpose();
  const Eigen::Index n = c.h.rows();
  if (n >= 2) {
    c.standardized = true;
    c.mean = c.h.colwise().mean();
    Eigen::RowVectorXd var =
        (c.h.rowwise() - c.mean).array().square().colwise().sum() / static_cast<double>(n);
    c.inv_std = (var.array() + kNormEps).sqrt().inverse();
    c.hhat = (c.h.rowwise() - c.mean).array().rowwise() * c.inv_std.array();
  } else {
    c.standardized = false;
    c.hhat = c.h;
  }
  c.hrelu = c.hhat.cwiseMax(0.0);
  return (c.hrelu * mlp.w2.value.transpose()).rowwise() +
         mlp.b2.value.col(0).transpose();
}

}  // namespace

EmbeddingBatch project(const Mlp& mlp, const EmbeddingBatch& pooled, MlpCtx* ctx) {
  if (pooled.role != EmbeddingBatch::Role::pooled)
    throw Error(ErrorCode::SHAPE_ERROR, "project expects pooled embeddings");
  EmbeddingBatch out;
  out.vectors = mlp_forward(mlp, pooled.vectors, ctx);
  out.object_ids = pooled.object_ids;
  out.role = EmbeddingBatch::Role::projected;
  return out;
}

EmbeddingBatch predict(const Mlp& mlp, const EmbeddingBatch& projected, MlpCtx* ctx) {
  if (projected.role != EmbeddingBatch::Role::projected)
    throw Error(ErrorCode::SHAPE_ERROR, "predict expects projected embeddings");
  EmbeddingBatch out;
  out.vectors = mlp_forward(mlp, projected.vectors, ctx);
  out.object_ids = projected.object_ids;
  out.role = EmbeddingBatch::Role::predicted;
  return out;
}

MatrixXd mlp_backward(Mlp& mlp, const MlpCtx& ctx, const MatrixXd& dout) {
  mlp.w2.grad += dout.transpose() * ctx.hrelu;
  mlp.b2.grad.col(0) += dout.colwise().sum().transpose();
  MatrixXd dhrelu = dout * mlp.w2.value;
  MatrixXd dhhat = (ctx.hhat.array() > 0.0)
                       .select(dhrelu, MatrixXd::Zero(dhrelu.rows(), dhrelu.cols()));
  MatrixXd dh;
  if (ctx.standardized) {
    const double n = static_cast<double>(dhhat.rows());
    Eigen::RowVectorXd mean_d = dhhat.colwise().mean();
    Eigen::RowVectorXd mean_dx =
        (dhhat.array() * ctx.hhat.array()).colwise().sum() / n;
    dh = (dhhat.rowwise() - mean_d).array() -
         (ctx.hhat.array().rowwise() * mean_dx.array());
    dh = dh.array().rowwise() * ctx.inv_std.array();
  } else {
    dh = dhhat;
  }
  mlp.w1.grad += dh.transpose() * ctx.x;
  mlp.b1.grad.col(0) += dh.colwise().sum().transpose();
  return dh * mlp.w1.value;
}

ProbMask predict_layout(const LayoutHead& head, const FeatureMap& f,
                        LayoutHeadCtx* ctx) {
  MatrixXd logits = head.w.value * f.values;
  logits.array() += head.b.value(0, 0);
  MatrixXd sig = (1.0 / (1.0 + (-logits.array()).exp())).matrix();
  if (ctx) ctx->sig = sig;
  ProbMask p;
  p.values = sig.cwiseMax(kProbClamp).cwiseMin(1.0 - kProbClamp);
  p.h = f.h;
  p.w = f.w;
  return p;
}

void predict_layout_backward(LayoutHead& head, const FeatureMap& f,
                             const LayoutHeadCtx& ctx, const MatrixXd& dprob,
                             MatrixXd* dfeat) {
  // Clamp treated as pass-through; callers keep tests outside the clamp zone.
  MatrixXd dlogits =
      (dprob.array() * ctx.sig.array() * (1.0 - ctx.sig.array())).matrix();
  head.w.grad += dlogits * f.values.transpose();
  head.b.grad(0, 0) += dlogits.sum();
  if (dfeat) *dfeat += head.w.value.transpose() * dlogits;
}

}  // namespace selfdocseg::model
