#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "selfdocseg/augment.hpp"
#include "selfdocseg/docgen.hpp"
#include "selfdocseg/maskgen.hpp"
#include "selfdocseg/model.hpp"

namespace selfdocseg::ssl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Optimizer { lars, sgd_momentum };
enum class FocalVariant { paper, standard };
enum class LossMode { combined, sim_only, det_only };

const char* to_string(Optimizer o);
const char* to_string(FocalVariant v);
const char* to_string(LossMode m);
Optimizer optimizer_from_string(const std::string& s);      // throws CONFIG_ERROR
FocalVariant focal_variant_from_string(const std::string& s);
LossMode loss_mode_from_string(const std::string& s);

struct TrainConfig {
  double lr_init = 0.2;
  double weight_decay = 0.0005;
  int epochs = 50;             // published schedule runs 800
  double tau = 0.99;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  Optimizer optimizer = Optimizer::lars;
  double lars_trust_coeff = 0.001;
  double momentum = 0.9;
  int batch_size = 8;
  uint64_t seed = 0;
  FocalVariant focal_variant = FocalVariant::paper;
  LossMode loss_mode = LossMode::combined;
  int max_steps = 0;                // 0 = run every epoch
  int checkpoint_every_epochs = 0;  // 0 = final checkpoint only

  void validate() const;
};

struct TrainState {
  model::OnlineModel online;
  model::TargetModel momentum;
  std::map<std::string, MatrixXd> opt_buffers;  // keyed by tensor name
  int64_t step = 0;
  int epoch = 0;
  Rng rng;
};

TrainState make_train_state(const model::ModelConfig& mc, uint64_t seed);

struct LossBreakdown {
  double l_sim = 0.0;
  double l_det = 0.0;
  double l_total = 0.0;
  int n_objects_pooled = 0;
  int n_vanished = 0;
};

// Mean over stacked objects of 4 - 2(cos(q1,z2') + cos(q2,z1')); the momentum
// inputs receive no gradient. Optional dq1/dq2 receive dL/dq rows.
double similarity_loss(const model::EmbeddingBatch& q1,
                       const model::EmbeddingBatch& q2,
                       const model::EmbeddingBatch& z1_tgt,
                       const model::EmbeddingBatch& z2_tgt,
                       MatrixXd* dq1 = nullptr, MatrixXd* dq2 = nullptr);

// Focal loss against the binary mask, alpha on both terms and normalized by
// the positive-pixel count (the "standard" variant weights the negative term
// by 1-alpha instead). Optional dprob receives dL/dp.
double focal_loss(const model::ProbMask& pred, const Bitmap& m, double alpha,
                  double gamma, FocalVariant variant = FocalVariant::paper,
                  MatrixXd* dprob = nullptr);

double total_loss(double l_sim, double l_det);

// Cosine annealing: 0.5 * lr_init * (1 + cos(pi * epoch / epochs)).
double lr_schedule(int epoch, const TrainConfig& cfg);

// Updates online tensors from their accumulated grads. LARS per tensor:
// local_lr = trust*|w| / (|g| + wd*|w| + 1e-12) when both norms > 0 else 1;
// v <- momentum*v + (g + wd*w)*local_lr; w <- w - lr*v.
void optimizer_step(TrainState& state, const TrainConfig& cfg, double lr);

// xi <- tau*xi + (1-tau)*theta over the encoder+projector pair.
void ema_update(model::TargetModel& target, const model::OnlineModel& online,
                double tau);

struct TrainItem {
  RgbImage v1, v2;
  std::vector<Bitmap> feat_masks;  // per-object masks at feature resolution
  Bitmap feat_layout;              // downsampled full layout mask
  int n_vanished = 0;
};

LossBreakdown train_step(TrainState& state, const std::vector<TrainItem>& batch,
                         const TrainConfig& cfg, double lr);

// --- corpus preparation ------------------------------------------------------

struct PreparedImage {
  RgbImage image;                  // padded to a stride multiple
  std::vector<Bitmap> feat_masks;
  Bitmap feat_layout;
  int n_vanished = 0;
};

// Runs the layout-mask pipeline on one image and aligns everything to the
// feature grid. Returns false when the image has no usable component.
bool prepare_image(const RgbImage& img, const maskgen::MaskGenParams& mp,
                   int stride, PreparedImage* out);

// --- pretraining ---------------------------------------------------------------

struct PretrainOptions {
  model::ModelConfig model;
  TrainConfig train;
  augment::AugmentConfig augment;
  maskgen::MaskGenParams maskgen;
  std::string config_hash;
  nlohmann::json config_echo;  // verbatim resolved run config
  int workers = 1;  // data-preparation parallelism; results are index-ordered
                    // so any worker count yields identical training
};

struct PretrainResult {
  std::string checkpoint_dir;
  std::string metrics_csv;
  int images_used = 0;
  int images_skipped = 0;
};

// Pre-trains on the manifest's train split (every record when the split is
// empty); annotations are never read. Writes checkpoints and a metrics log
// `step,epoch,lr,l_sim,l_det,l_total,n_vanished` under out_dir.
PretrainResult pretrain(const PretrainOptions& opts,
                        const docgen::CorpusManifest& manifest,
                        const std::string& out_dir,
                        const std::string& resume_checkpoint = "");

// --- checkpoints -----------------------------------------------------------------

void save_checkpoint(const TrainState& state, const PretrainOptions& opts,
                     const std::string& dir);

struct Checkpoint {
  TrainState state;
  model::ModelConfig model_config;
  TrainConfig train_config;
  maskgen::MaskGenParams maskgen_params;
  std::string config_hash;
  nlohmann::json config_echo;
};

Checkpoint load_checkpoint(const std::string& dir);  // throws MISSING_CHECKPOINT

}  // namespace selfdocseg::ssl
