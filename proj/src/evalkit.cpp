#include "selfdocseg/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "selfdocseg/blob_io.hpp"
#include "selfdocseg/maskgen.hpp"
#include "selfdocseg/png_io.hpp"
#include "selfdocseg/ssl.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace selfdocseg::evalkit {

namespace {

constexpr int kClasses = docgen::kNumClasses;

std::vector<int> split_or_all(const std::vector<int>& split, size_t n_records) {
  if (!split.empty()) return split;
  std::vector<int> all(n_records);
  for (size_t i = 0; i < n_records; ++i) all[i] = static_cast<int>(i);
  return all;
}

RgbImage pad_to_stride(const RgbImage& img, int stride, int* pw, int* ph) {
  int W = (img.width + stride - 1) / stride * stride;
  int H = (img.height + stride - 1) / stride * stride;
  *pw = W;
  *ph = H;
  if (W == img.width && H == img.height) return img;
  RgbImage out(W, H, 255);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const uint8_t* p = img.at(x, y);
      out.set(x, y, p[0], p[1], p[2]);
    }
  return out;
}

Bitmap pad_mask(const Bitmap& m, int W, int H) {
  if (m.width == W && m.height == H) return m;
  Bitmap out(W, H, 0);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) out.at(x, y) = m.at(x, y);
  return out;
}

MatrixXd softmax_cols(const MatrixXd& logits) {
  MatrixXd p = logits;
  for (Eigen::Index c = 0; c < p.cols(); ++c) {
    double mx = p.col(c).maxCoeff();
    p.col(c) = (p.col(c).array() - mx).exp();
    p.col(c) /= p.col(c).sum();
  }
  return p;
}

double sample_sd(const std::vector<double>& v, double mean) {
  if (v.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

// Per-class all-point-interpolated AP; classes taken from the union of
// detection and ground-truth labels.
std::map<int, double> ap_by_class(const std::vector<Detection>& dets,
                                  const docgen::GroundTruth& gts,
                                  double iou_thresh) {
  std::map<int, double> out;
  std::vector<int> classes;
  for (const auto& d : dets) classes.push_back(d.label);
  for (const auto& g : gts.objects) classes.push_back(g.label);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());

  for (int cls : classes) {
    std::vector<int> gt_ids;
    for (size_t i = 0; i < gts.objects.size(); ++i)
      if (gts.objects[i].label == cls) gt_ids.push_back(static_cast<int>(i));
    std::vector<int> det_ids;
    for (size_t i = 0; i < dets.size(); ++i)
      if (dets[i].label == cls) det_ids.push_back(static_cast<int>(i));
    std::stable_sort(det_ids.begin(), det_ids.end(), [&](int a, int b) {
      return dets[a].score > dets[b].score;
    });

    if (gt_ids.empty()) {
      out[cls] = det_ids.empty() ? 1.0 : 0.0;
      continue;
    }
    std::vector<bool> used(gt_ids.size(), false);
    std::vector<int> tp_flags;
    for (int di : det_ids) {
      int best = -1;
      double best_iou = 0.0;
      for (size_t g = 0; g < gt_ids.size(); ++g) {
        if (used[g]) continue;
        double v = iou(dets[di].mask, gts.objects[gt_ids[g]].mask);
        // Higher IoU wins; exact ties resolved by lower GT index.
        if (v >= iou_thresh && v > best_iou) {
          best_iou = v;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0) {
        used[best] = true;
        tp_flags.push_back(1);
      } else {
        tp_flags.push_back(0);
      }
    }
    // all-point interpolation over the ranked list
    const double n_gt = static_cast<double>(gt_ids.size());
    std::vector<double> precision, recall;
    int tp = 0;
    for (size_t i = 0; i < tp_flags.size(); ++i) {
      tp += tp_flags[i];
      precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
      recall.push_back(static_cast<double>(tp) / n_gt);
    }
    for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i)
      precision[i] = std::max(precision[i], precision[i + 1]);
    double ap = 0.0, prev_r = 0.0;
    for (size_t i = 0; i < precision.size(); ++i) {
      ap += (recall[i] - prev_r) * precision[i];
      prev_r = recall[i];
    }
    out[cls] = ap;
  }
  return out;
}

}  // namespace

void EvalConfig::validate() const {
  if (prob_threshold < 0.0 || prob_threshold > 1.0)
    throw Error(ErrorCode::CONFIG_ERROR, "prob_threshold must be in [0,1]");
  if (min_area < 0) throw Error(ErrorCode::CONFIG_ERROR, "min_area must be >= 0");
  if (iou_thresh <= 0.0 || iou_thresh > 1.0)
    throw Error(ErrorCode::CONFIG_ERROR, "iou_thresh must be in (0,1]");
  if (fractions.empty() || seeds.empty())
    throw Error(ErrorCode::CONFIG_ERROR, "fractions/seeds must be non-empty");
  for (double f : fractions)
    if (f <= 0.0 || f > 1.0)
      throw Error(ErrorCode::CONFIG_ERROR, "fractions must be in (0,1]");
  if (probe_epochs < 1 || probe_lr <= 0.0)
    throw Error(ErrorCode::CONFIG_ERROR, "bad probe training settings");
  if (probe_momentum < 0.0 || probe_momentum >= 1.0)
    throw Error(ErrorCode::CONFIG_ERROR, "probe_momentum must be in [0,1)");
  if (probe_weight_decay < 0.0)
    throw Error(ErrorCode::CONFIG_ERROR, "probe_weight_decay must be >= 0");
}

double iou(const Bitmap& a, const Bitmap& b) {
  if (a.width != b.width || a.height != b.height)
    throw Error(ErrorCode::SHAPE_MISMATCH, "iou mask shapes disagree");
  long inter = 0, uni = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    bool av = a.px[i] != 0, bv = b.px[i] != 0;
    inter += av && bv;
    uni += av || bv;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double compute_ap(const std::vector<Detection>& dets,
                  const docgen::GroundTruth& gts, double iou_thresh) {
  if (iou_thresh <= 0.0 || iou_thresh > 1.0)
    throw Error(ErrorCode::CONFIG_ERROR, "iou_thresh must be in (0,1]");
  for (const auto& d : dets)
    if (d.mask.popcount() == 0)
      throw Error(ErrorCode::EMPTY_MASK, "detection with empty mask");
  auto per_class = ap_by_class(dets, gts, iou_thresh);
  if (per_class.empty()) return 1.0;  // no GT, no detections
  double acc = 0.0;
  for (const auto& [cls, ap] : per_class) acc += ap;
  return acc / static_cast<double>(per_class.size());
}

ProbeSample make_probe_sample(const model::Encoder& encoder, const RgbImage& img,
                              const docgen::GroundTruth& gt) {
  ProbeSample s;
  RgbImage padded = pad_to_stride(img, encoder.stride(), &s.image_w, &s.image_h);
  s.features = model::encode(encoder, padded);
  for (const auto& obj : gt.objects) {
    docgen::GtObject o;
    o.label = obj.label;
    o.bbox = obj.bbox;
    o.mask = pad_mask(obj.mask, s.image_w, s.image_h);
    s.gt.objects.push_back(std::move(o));
  }
  const int stride = encoder.stride();
  const int fh = s.features.h, fw = s.features.w;
  s.cell_labels.assign(static_cast<size_t>(fh) * fw, 0);
  for (int cy = 0; cy < fh; ++cy)
    for (int cx = 0; cx < fw; ++cx) {
      int best_cover = 0, best_label = 0;
      for (const auto& obj : s.gt.objects) {
        int cover = 0;
        for (int y = cy * stride; y < (cy + 1) * stride; ++y)
          for (int x = cx * stride; x < (cx + 1) * stride; ++x)
            cover += obj.mask.at(x, y);
        if (cover > best_cover) {
          best_cover = cover;
          best_label = obj.label + 1;
        }
      }
      s.cell_labels[static_cast<size_t>(cy) * fw + cx] = best_label;
    }
  return s;
}

ProbeHead train_probe(const model::Encoder& encoder,
                      const docgen::CorpusManifest& manifest, double fraction,
                      const EvalConfig& cfg, uint64_t seed, ProbeTrainLog* log) {
  cfg.validate();
  if (fraction <= 0.0 || fraction > 1.0)
    throw Error(ErrorCode::CONFIG_ERROR, "fraction must be in (0,1]");
  std::vector<int> ids = split_or_all(manifest.split.train, manifest.records.size());
  if (ids.empty()) throw Error(ErrorCode::EMPTY_SPLIT, "no labeled train records");

  Rng shuffle_rng(derive_seed(seed, "probe:shuffle"));
  shuffle_rng.shuffle(ids);
  size_t keep = static_cast<size_t>(
      std::ceil(fraction * static_cast<double>(ids.size())));
  keep = std::max<size_t>(1, std::min(keep, ids.size()));
  ids.resize(keep);

  std::vector<ProbeSample> samples;
  for (int idx : ids) {
    RgbImage img = read_rgb_png(manifest.resolve(manifest.records.at(idx).image_path));
    samples.push_back(make_probe_sample(encoder, img,
                                        docgen::load_ground_truth(manifest, idx)));
  }

  const int d = encoder.out_dim();
  ProbeHead head;
  head.n_classes = kClasses;
  head.w = MatrixXd::Zero(head.rows(), d);
  head.b = MatrixXd::Zero(head.rows(), 1);
  MatrixXd vw = MatrixXd::Zero(head.rows(), d);
  MatrixXd vb = MatrixXd::Zero(head.rows(), 1);

  for (int epoch = 0; epoch < cfg.probe_epochs; ++epoch) {
    std::vector<int> order(samples.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng order_rng(derive_seed(seed, "probe:order:epoch:" + std::to_string(epoch)));
    order_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int si : order) {
      const ProbeSample& s = samples[si];
      MatrixXd logits = head.w * s.features.values;
      logits.colwise() += head.b.col(0);
      MatrixXd p = softmax_cols(logits);
      const double inv_p = 1.0 / static_cast<double>(p.cols());
      double loss = 0.0;
      MatrixXd dlogits = p;
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        int t = s.cell_labels[static_cast<size_t>(c)];
        loss -= std::log(std::max(p(t, c), 1e-12));
        dlogits(t, c) -= 1.0;
      }
      loss *= inv_p;
      dlogits *= inv_p;
      epoch_loss += loss;
      MatrixXd gw = dlogits * s.features.values.transpose() +
                    cfg.probe_weight_decay * head.w;
      MatrixXd gb = dlogits.rowwise().sum();
      vw = cfg.probe_momentum * vw + gw;
      vb = cfg.probe_momentum * vb + gb;
      head.w -= cfg.probe_lr * vw;
      head.b -= cfg.probe_lr * vb;
    }
    if (log) log->epoch_loss.push_back(epoch_loss / static_cast<double>(samples.size()));
  }
  return head;
}

std::vector<Detection> segment_probs(const MatrixXd& probs, int fh, int fw,
                                     int stride, int W, int H,
                                     double prob_threshold, int min_area) {
  std::vector<Detection> dets;
  for (int cls = 0; cls < kClasses; ++cls) {
    Bitmap bin(W, H, 0);
    bool any = false;
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        double p = probs(cls + 1, static_cast<Eigen::Index>(y / stride) * fw + x / stride);
        if (p > prob_threshold) {
          bin.at(x, y) = 1;
          any = true;
        }
      }
    if (!any) continue;
    maskgen::ObjectMaskSet comps;
    try {
      comps = maskgen::extract_object_masks(bin, std::max(1, min_area));
    } catch (const Error& e) {
      if (e.code == ErrorCode::NO_COMPONENTS) continue;
      throw;
    }
    for (const Bitmap& m : comps.masks) {
      Detection det;
      det.mask = m;
      det.label = cls;
      double acc = 0.0;
      long n = 0;
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          if (m.at(x, y)) {
            acc += probs(cls + 1,
                         static_cast<Eigen::Index>(y / stride) * fw + x / stride);
            ++n;
          }
      det.score = acc / static_cast<double>(n);
      dets.push_back(std::move(det));
    }
  }
  return dets;
}

std::vector<Detection> segment(const RgbImage& image, const model::Encoder& encoder,
                               const ProbeHead& head, double prob_threshold,
                               int min_area) {
  int W = 0, H = 0;
  RgbImage padded = pad_to_stride(image, encoder.stride(), &W, &H);
  model::FeatureMap f = model::encode(encoder, padded);
  MatrixXd logits = head.w * f.values;
  logits.colwise() += head.b.col(0);
  MatrixXd probs = softmax_cols(logits);
  return segment_probs(probs, f.h, f.w, encoder.stride(), W, H,
                            prob_threshold, min_area);
}

EvalReport evaluate_probe(const model::Encoder& encoder, const ProbeHead& head,
                          const docgen::CorpusManifest& manifest,
                          const std::vector<int>& record_ids,
                          const EvalConfig& cfg) {
  cfg.validate();
  if (record_ids.empty()) throw Error(ErrorCode::EMPTY_SPLIT, "no eval records");

  std::vector<long> tp(kClasses, 0), fp(kClasses, 0), fn(kClasses, 0);
  std::vector<double> ap_sum(kClasses, 0.0);
  std::vector<int> ap_count(kClasses, 0);
  double map_sum = 0.0;

  for (int idx : record_ids) {
    RgbImage img = read_rgb_png(manifest.resolve(manifest.records.at(idx).image_path));
    ProbeSample s = make_probe_sample(encoder, img,
                                      docgen::load_ground_truth(manifest, idx));
    MatrixXd logits = head.w * s.features.values;
    logits.colwise() += head.b.col(0);
    MatrixXd probs = softmax_cols(logits);

    const int stride = encoder.stride();
    const int fw = s.features.w;
    // ground-truth pixel labels (objects are disjoint)
    std::vector<int> gt_px(static_cast<size_t>(s.image_w) * s.image_h, 0);
    for (const auto& obj : s.gt.objects)
      for (int y = 0; y < s.image_h; ++y)
        for (int x = 0; x < s.image_w; ++x)
          if (obj.mask.at(x, y))
            gt_px[static_cast<size_t>(y) * s.image_w + x] = obj.label + 1;

    for (int y = 0; y < s.image_h; ++y)
      for (int x = 0; x < s.image_w; ++x) {
        Eigen::Index cell = static_cast<Eigen::Index>(y / stride) * fw + x / stride;
        int pred;
        probs.col(cell).maxCoeff(&pred);
        int truth = gt_px[static_cast<size_t>(y) * s.image_w + x];
        for (int c = 1; c <= kClasses; ++c) {
          bool in_pred = pred == c, in_truth = truth == c;
          if (in_pred && in_truth) ++tp[c - 1];
          else if (in_pred) ++fp[c - 1];
          else if (in_truth) ++fn[c - 1];
        }
      }

    auto dets = segment_probs(probs, s.features.h, s.features.w, stride,
                                   s.image_w, s.image_h, cfg.prob_threshold,
                                   cfg.min_area);
    auto per_class = ap_by_class(dets, s.gt, cfg.iou_thresh);
    if (!per_class.empty()) {
      double acc = 0.0;
      for (const auto& [cls, ap] : per_class) {
        acc += ap;
        if (cls >= 0 && cls < kClasses) {
          ap_sum[cls] += ap;
          ap_count[cls] += 1;
        }
      }
      map_sum += acc / static_cast<double>(per_class.size());
    } else {
      map_sum += 1.0;
    }
  }

  EvalReport rep;
  rep.n_images = static_cast<int>(record_ids.size());
  rep.class_iou.assign(kClasses, -1.0);
  rep.class_f1.assign(kClasses, -1.0);
  rep.class_ap.assign(kClasses, -1.0);
  double iou_acc = 0.0, f1_acc = 0.0;
  int defined = 0;
  for (int c = 0; c < kClasses; ++c) {
    long denom = tp[c] + fp[c] + fn[c];
    if (denom > 0) {
      rep.class_iou[c] = static_cast<double>(tp[c]) / static_cast<double>(denom);
      rep.class_f1[c] = 2.0 * static_cast<double>(tp[c]) /
                        static_cast<double>(2 * tp[c] + fp[c] + fn[c]);
      iou_acc += rep.class_iou[c];
      f1_acc += rep.class_f1[c];
      ++defined;
    }
    if (ap_count[c] > 0) rep.class_ap[c] = ap_sum[c] / ap_count[c];
  }
  rep.pixel_iou = defined > 0 ? iou_acc / defined : 1.0;
  rep.pixel_f1 = defined > 0 ? f1_acc / defined : 1.0;
  rep.ap_at_50 = map_sum / static_cast<double>(record_ids.size());
  return rep;
}

json EvalReport::to_json() const {
  json per_class = json::object();
  for (int c = 0; c < kClasses; ++c) {
    json entry;
    entry["iou"] = class_iou[c] < 0 ? json() : json(class_iou[c]);
    entry["f1"] = class_f1[c] < 0 ? json() : json(class_f1[c]);
    entry["ap"] = class_ap[c] < 0 ? json() : json(class_ap[c]);
    per_class[docgen::class_name(c)] = entry;
  }
  return json{{"pixel_iou", pixel_iou}, {"pixel_f1", pixel_f1},
              {"ap_at_50", ap_at_50},   {"per_class", per_class},
              {"n_images", n_images},   {"seed", seed}};
}

void save_probe_head(const ProbeHead& head, const std::string& dir,
                     const std::string& config_hash) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IO_ERROR, "cannot create dir: " + dir);
  detail::write_tensor_blob(head.w, (fs::path(dir) / "probe.w.bin").string());
  detail::write_tensor_blob(head.b, (fs::path(dir) / "probe.b.bin").string());
  json manifest{{"format", "selfdocseg-probe-v1"},
                {"n_classes", head.n_classes},
                {"feature_dim", head.w.cols()},
                {"config_hash", config_hash}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write probe manifest");
  out << manifest.dump(2) << "\n";
}

ProbeHead load_probe_head(const std::string& dir) {
  fs::path mpath = fs::path(dir) / "manifest.json";
  if (!fs::exists(mpath))
    throw Error(ErrorCode::MISSING_CHECKPOINT, "no probe head at " + dir);
  std::ifstream in(mpath);
  json manifest;
  in >> manifest;
  ProbeHead head;
  head.n_classes = manifest.at("n_classes");
  Eigen::Index d = manifest.at("feature_dim");
  head.w = detail::read_tensor_blob((fs::path(dir) / "probe.w.bin").string(),
                                    head.rows(), d);
  head.b = detail::read_tensor_blob((fs::path(dir) / "probe.b.bin").string(),
                                    head.rows(), 1);
  return head;
}

AblationReport ablation_harness(const std::string& mode,
                                const docgen::CorpusManifest& manifest,
                                const std::vector<AblationArmSpec>& arms,
                                const EvalConfig& cfg) {
  if (mode != "semi_supervised" && mode != "loss_ablation")
    throw Error(ErrorCode::CONFIG_ERROR, "unknown ablation mode: " + mode);
  cfg.validate();
  std::vector<int> test_ids = split_or_all(manifest.split.test, manifest.records.size());

  AblationReport report;
  report.mode = mode;
  for (const auto& arm : arms) {
    ArmResult result;
    result.name = arm.name;
    result.fraction = arm.fraction;
    std::vector<double> ious, f1s, aps;
    for (uint64_t seed : cfg.seeds) {
      auto it = arm.checkpoints.find(seed);
      if (it == arm.checkpoints.end() ||
          !fs::exists(fs::path(it->second) / "manifest.json"))
        throw Error(ErrorCode::MISSING_CHECKPOINT,
                    "arm " + arm.name + " lacks checkpoint for seed " +
                        std::to_string(seed));
      ssl::Checkpoint ck = ssl::load_checkpoint(it->second);
      ProbeHead head =
          train_probe(ck.state.online.encoder, manifest, arm.fraction, cfg, seed);
      EvalReport rep =
          evaluate_probe(ck.state.online.encoder, head, manifest, test_ids, cfg);
      rep.seed = seed;
      ious.push_back(rep.pixel_iou);
      f1s.push_back(rep.pixel_f1);
      aps.push_back(rep.ap_at_50);
      result.per_seed.push_back(std::move(rep));
    }
    auto mean = [](const std::vector<double>& v) {
      double acc = 0.0;
      for (double x : v) acc += x;
      return acc / static_cast<double>(v.size());
    };
    result.mean_iou = mean(ious);
    result.sd_iou = sample_sd(ious, result.mean_iou);
    result.mean_f1 = mean(f1s);
    result.sd_f1 = sample_sd(f1s, result.mean_f1);
    result.mean_ap = mean(aps);
    result.sd_ap = sample_sd(aps, result.mean_ap);
    report.arms.push_back(std::move(result));
  }
  return report;
}

json AblationReport::to_json() const {
  json arms_json = json::array();
  for (const auto& arm : arms) {
    json per_seed = json::array();
    for (const auto& rep : arm.per_seed) per_seed.push_back(rep.to_json());
    arms_json.push_back(json{{"name", arm.name},
                             {"fraction", arm.fraction},
                             {"mean_iou", arm.mean_iou},
                             {"sd_iou", arm.sd_iou},
                             {"mean_f1", arm.mean_f1},
                             {"sd_f1", arm.sd_f1},
                             {"mean_ap", arm.mean_ap},
                             {"sd_ap", arm.sd_ap},
                             {"per_seed", per_seed}});
  }
  return json{{"mode", mode}, {"arms", arms_json}};
}

std::string AblationReport::to_text() const {
  std::string out = "mode: " + mode + "\n";
  char line[256];
  std::snprintf(line, sizeof(line), "%-14s %8s %18s %18s %18s\n", "arm", "frac",
                "pixel_iou", "pixel_f1", "ap@thresh");
  out += line;
  for (const auto& arm : arms) {
    std::snprintf(line, sizeof(line),
                  "%-14s %8.2f %9.4f +-%6.4f %9.4f +-%6.4f %9.4f +-%6.4f\n",
                  arm.name.c_str(), arm.fraction, arm.mean_iou, arm.sd_iou,
                  arm.mean_f1, arm.sd_f1, arm.mean_ap, arm.sd_ap);
    out += line;
  }
  return out;
}

// --- visualization -------------------------------------------------------------

namespace {

struct Rgb {
  uint8_t r, g, b;
};

constexpr Rgb kPalette[8] = {
    {60, 100, 220}, {40, 170, 90},  {230, 140, 30}, {160, 60, 200},
    {200, 40, 60},  {20, 160, 180}, {120, 120, 40}, {90, 90, 90},
};

// 5x7 bitmap font for A-Z, 0-9, '.', '_'; bit 4 is the leftmost column.
const uint8_t* glyph_rows(char ch) {
  static const uint8_t digits[10][7] = {
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
  };
  static const uint8_t letters[26][7] = {
      {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
      {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
      {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
      {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x19, 0x15, 0x13, 0x11, 0x11, 0x11},
      {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
      {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x1B, 0x11}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
      {0x11, 0x11, 0x0A, 0x04, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},
  };
  static const uint8_t dot[7] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C};
  static const uint8_t underscore[7] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F};
  static const uint8_t blank[7] = {0, 0, 0, 0, 0, 0, 0};
  if (ch >= '0' && ch <= '9') return digits[ch - '0'];
  if (ch >= 'A' && ch <= 'Z') return letters[ch - 'A'];
  if (ch == '.') return dot;
  if (ch == '_') return underscore;
  return blank;
}

void draw_text(RgbImage& img, int x0, int y0, const std::string& text, Rgb color) {
  int x = x0;
  for (char ch : text) {
    const uint8_t* rows = glyph_rows(ch);
    for (int ry = 0; ry < 7; ++ry)
      for (int rx = 0; rx < 5; ++rx)
        if (rows[ry] & (1 << (4 - rx))) {
          int px = x + rx, py = y0 + ry;
          if (px >= 0 && px < img.width && py >= 0 && py < img.height)
            img.set(px, py, color.r, color.g, color.b);
        }
    x += 6;
  }
}

}  // namespace

void visualize(const RgbImage& image, const std::vector<Detection>& dets,
               const std::string& out_path) {
  RgbImage out = image;
  const double alpha = 0.45;
  for (const auto& det : dets) {
    Rgb c = kPalette[det.label % 8];
    for (int y = 0; y < out.height && y < det.mask.height; ++y)
      for (int x = 0; x < out.width && x < det.mask.width; ++x)
        if (det.mask.at(x, y)) {
          uint8_t* p = out.at(x, y);
          p[0] = static_cast<uint8_t>(std::lround(p[0] * (1 - alpha) + c.r * alpha));
          p[1] = static_cast<uint8_t>(std::lround(p[1] * (1 - alpha) + c.g * alpha));
          p[2] = static_cast<uint8_t>(std::lround(p[2] * (1 - alpha) + c.b * alpha));
        }
    Box bb = det.mask.bounding_box();
    if (!bb.empty()) {
      for (int x = bb.x0; x <= bb.x1; ++x) {
        if (bb.y0 >= 0 && bb.y0 < out.height && x < out.width) out.set(x, bb.y0, c.r, c.g, c.b);
        if (bb.y1 >= 0 && bb.y1 < out.height && x < out.width) out.set(x, bb.y1, c.r, c.g, c.b);
      }
      for (int y = bb.y0; y <= bb.y1; ++y) {
        if (bb.x0 >= 0 && bb.x0 < out.width && y < out.height) out.set(bb.x0, y, c.r, c.g, c.b);
        if (bb.x1 >= 0 && bb.x1 < out.width && y < out.height) out.set(bb.x1, y, c.r, c.g, c.b);
      }
      char label[64];
      std::snprintf(label, sizeof(label), "%s %.2f", docgen::class_name(det.label),
                    det.score);
      int ty = bb.y0 >= 9 ? bb.y0 - 9 : bb.y1 + 2;
      draw_text(out, bb.x0, ty, label, c);
    }
  }
  write_rgb_png(out, out_path);
}

}  // namespace selfdocseg::evalkit
