#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "selfdocseg/maskgen.hpp"
#include "selfdocseg/rng.hpp"
#include "selfdocseg/types.hpp"

namespace selfdocseg::model {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Named parameter. The momentum branch never allocates grad: gradients
// w.r.t. those tensors are structurally absent, not merely zeroed.
struct Tensor {
  std::string name;
  MatrixXd value;
  MatrixXd grad;

  bool has_grad() const { return grad.size() > 0; }
  void alloc_grad() { grad = MatrixXd::Zero(value.rows(), value.cols()); }
  void zero_grad() {
    if (has_grad()) grad.setZero();
  }
};

struct ModelConfig {
  std::vector<int> encoder_channels = {32, 64, 128, 256};
  int proj_hidden = 512;
  int proj_out = 256;
  int pred_hidden = 512;
  // Records the published scale: ResNet50-sized d=2048 features with
  // 4096-hidden MLPs. Off by default; desk-scale dims above are the ones
  // actually trained here.
  bool paper_dims = false;

  void validate() const;
  ModelConfig resolved() const;
  int stride() const { return 1 << static_cast<int>(encoder_channels.size()); }
  int feature_dim() const { return encoder_channels.back(); }
};

// Salient feature map f: c channels over an h x w grid; column p = y*w + x.
struct FeatureMap {
  MatrixXd values;  // c x (h*w)
  int c = 0, h = 0, w = 0;
  int stride = 1;
};

struct EmbeddingBatch {
  enum class Role { pooled, projected, predicted };
  MatrixXd vectors;  // n x d
  std::vector<int> object_ids;
  Role role = Role::pooled;

  int n() const { return static_cast<int>(vectors.rows()); }
  int dim() const { return static_cast<int>(vectors.cols()); }
};

// Pixel-wise layout probabilities, clamped into (0,1).
struct ProbMask {
  MatrixXd values;  // 1 x (h*w)
  int h = 0, w = 0;
};

inline constexpr double kProbClamp = 1e-6;

// --- layers ---------------------------------------------------------------

// 3x3 convolution, stride 2, pad 1, followed by per-channel (instance)
// normalization and a rectifier.
struct ConvStage {
  int in_ch = 0, out_ch = 0;
  Tensor w;      // out_ch x (in_ch*9)
  Tensor b;      // out_ch x 1
  Tensor gamma;  // out_ch x 1
  Tensor beta;   // out_ch x 1
};

struct Encoder {
  std::vector<ConvStage> stages;
  int stride() const { return 1 << static_cast<int>(stages.size()); }
  int out_dim() const { return stages.back().out_ch; }
};

// Two-layer MLP: linear -> per-feature standardization over the object batch
// (identity when n == 1) -> rectifier -> linear.
struct Mlp {
  Tensor w1, b1;  // hidden x in, hidden x 1
  Tensor w2, b2;  // out x hidden, out x 1
};

// 1x1 convolution d -> 1 with bias; sigmoid applied by predict_layout.
struct LayoutHead {
  Tensor w;  // 1 x d
  Tensor b;  // 1 x 1
};

// --- forward/backward contexts ---------------------------------------------

struct StageCtx {
  MatrixXd cols;      // im2col buffer
  int hi = 0, wi = 0, ho = 0, wo = 0;
  VectorXd mean, inv_std;
  MatrixXd xhat;      // normalized pre-activation
  MatrixXd out;       // post-relu
};

struct EncoderCtx {
  MatrixXd input;  // 3 x (H*W), [0,1]
  int h0 = 0, w0 = 0;
  std::vector<StageCtx> stages;
};

struct MlpCtx {
  MatrixXd x;        // n x in
  MatrixXd h;        // n x hidden, pre-standardization
  MatrixXd hhat;     // standardized
  MatrixXd hrelu;
  Eigen::RowVectorXd mean, inv_std;
  bool standardized = false;
};

struct LayoutHeadCtx {
  MatrixXd sig;  // 1 x P, unclamped sigmoid
};

// --- parameter containers ---------------------------------------------------

struct OnlineModel {  // theta: encoder + projector + predictor + layout head
  ModelConfig config;
  Encoder encoder;
  Mlp projector;
  Mlp predictor;
  LayoutHead layout_head;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
  void zero_grads();
};

struct TargetModel {  // xi: encoder + projector only, gradients absent
  Encoder encoder;
  Mlp projector;

  std::vector<Tensor*> tensors();
  std::vector<const Tensor*> tensors() const;
};

OnlineModel make_online_model(const ModelConfig& cfg, Rng& rng);
// Copies the encoder+projector values of the online model; no grad buffers.
TargetModel make_target_model(const OnlineModel& online);

// --- operations --------------------------------------------------------------

// Deterministic forward pass; throws SHAPE_ERROR when H or W is not
// divisible by the encoder stride. ctx may be null for inference.
FeatureMap encode(const Encoder& enc, const RgbImage& img, EncoderCtx* ctx = nullptr);

// Accumulates parameter grads and returns nothing (input grad unused).
void encode_backward(Encoder& enc, const EncoderCtx& ctx, const MatrixXd& dfeat);

// Eq.-style mask-average pooling: one vector per object mask.
EmbeddingBatch mask_pool(const FeatureMap& f, const std::vector<Bitmap>& masks);
void mask_pool_backward(const std::vector<Bitmap>& masks, const MatrixXd& d_vectors,
                        MatrixXd* dfeat);

EmbeddingBatch project(const Mlp& mlp, const EmbeddingBatch& pooled,
                       MlpCtx* ctx = nullptr);
EmbeddingBatch predict(const Mlp& mlp, const EmbeddingBatch& projected,
                       MlpCtx* ctx = nullptr);
// Backward through either MLP; returns the gradient w.r.t. its input rows.
MatrixXd mlp_backward(Mlp& mlp, const MlpCtx& ctx, const MatrixXd& dout);

ProbMask predict_layout(const LayoutHead& head, const FeatureMap& f,
                        LayoutHeadCtx* ctx = nullptr);
// dprob is dL/d(clamped prob); accumulates head grads and adds the feature
// gradient into *dfeat.
void predict_layout_backward(LayoutHead& head, const FeatureMap& f,
                             const LayoutHeadCtx& ctx, const MatrixXd& dprob,
                             MatrixXd* dfeat);

}  // namespace selfdocseg::model
