#include "selfdocseg/docgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "selfdocseg/png_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace selfdocseg::docgen {

namespace {

constexpr int kPageMargin = 4;     // objects keep this far from page edges
constexpr int kObjectMargin = 8;   // min gap between objects
constexpr int kMaxInk = 96;        // renderer never draws brighter ink

struct Sizes {
  int min_w, min_h, max_frac_num;  // max dim = usable * num / 16
};

// Per-class minimum sizes keep the classical mask pipeline well conditioned:
// even the smallest object survives a 5x5 erosion as a single blob.
Sizes class_sizes(int label) {
  switch (label) {
    case TITLE: return {24, 8, 10};
    case FIGURE: return {16, 16, 10};
    case TABLE: return {24, 24, 10};
    default: return {12, 12, 10};
  }
}

int clampi(int v, int lo, int hi) { return std::max(lo, std::min(hi, v)); }

uint8_t ink_shade(int base, Rng& rng) {
  return static_cast<uint8_t>(clampi(base + static_cast<int>(rng.uniform_int(-15, 15)), 0, kMaxInk));
}

void fill_rect(RgbImage& img, int x0, int y0, int x1, int y1, uint8_t v) {
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) img.set(x, y, v, v, v);
}

void draw_dash_row(RgbImage& img, const Box& b, int y, int stroke_h, int min_len,
                   int max_len, int ink_base, Rng& rng) {
  int x = b.x0;
  while (x <= b.x1) {
    int len = static_cast<int>(rng.uniform_int(min_len, max_len));
    int x_end = std::min(x + len - 1, b.x1);
    uint8_t v = ink_shade(ink_base, rng);
    fill_rect(img, x, y, x_end, std::min(y + stroke_h - 1, b.y1), v);
    x = x_end + 1 + static_cast<int>(rng.uniform_int(1, 2));
  }
}

// Rows of glyph-like dashes spread evenly from the top edge to the bottom edge.
void render_text(RgbImage& img, const Box& b, int stroke_h, int pitch,
                 int min_len, int max_len, int ink_base, Rng& rng) {
  int span = b.height() - stroke_h;
  int rows = std::max(2, (int)std::lround((double)b.height() / pitch) + 1);
  if (span <= 0) {
    draw_dash_row(img, b, b.y0, stroke_h, min_len, max_len, ink_base, rng);
    return;
  }
  for (int i = 0; i < rows; ++i) {
    int y = b.y0 + (int)std::lround((double)i * span / (rows - 1));
    draw_dash_row(img, b, y, stroke_h, min_len, max_len, ink_base, rng);
  }
}

void render_figure(RgbImage& img, const Box& b, int ink_base, Rng& rng) {
  uint8_t border = ink_shade(ink_base, rng);
  fill_rect(img, b.x0, b.y0, b.x1, std::min(b.y0 + 1, b.y1), border);
  fill_rect(img, b.x0, std::max(b.y1 - 1, b.y0), b.x1, b.y1, border);
  fill_rect(img, b.x0, b.y0, std::min(b.x0 + 1, b.x1), b.y1, border);
  fill_rect(img, std::max(b.x1 - 1, b.x0), b.y0, b.x1, b.y1, border);
  // Diagonal hatching at spacing 4; a 5x5 erosion fuses it into one blob.
  int phase = static_cast<int>(rng.uniform_int(0, 3));
  for (int y = b.y0; y <= b.y1; ++y)
    for (int x = b.x0; x <= b.x1; ++x)
      if ((x + y) % 4 == phase) {
        uint8_t v = ink_shade(ink_base, rng);
        img.set(x, y, v, v, v);
      }
  int dots = b.width() * b.height() / 64;
  for (int i = 0; i < dots; ++i) {
    int x = static_cast<int>(rng.uniform_int(b.x0, b.x1));
    int y = static_cast<int>(rng.uniform_int(b.y0, b.y1));
    uint8_t v = ink_shade(ink_base, rng);
    img.set(x, y, v, v, v);
  }
}

void render_table(RgbImage& img, const Box& b, int ink_base, Rng& rng) {
  uint8_t line = ink_shade(ink_base, rng);
  fill_rect(img, b.x0, b.y0, b.x1, std::min(b.y0 + 1, b.y1), line);
  fill_rect(img, b.x0, std::max(b.y1 - 1, b.y0), b.x1, b.y1, line);
  fill_rect(img, b.x0, b.y0, std::min(b.x0 + 1, b.x1), b.y1, line);
  fill_rect(img, std::max(b.x1 - 1, b.x0), b.y0, b.x1, b.y1, line);
  const int pitch = 8;
  for (int x = b.x0 + pitch; x < b.x1 - 1; x += pitch)
    fill_rect(img, x, b.y0, x, b.y1, line);
  for (int y = b.y0 + pitch; y < b.y1 - 1; y += pitch)
    fill_rect(img, b.x0, y, b.x1, y, line);
  // Short dashes inside cells.
  for (int cy = b.y0 + pitch / 2; cy < b.y1 - 2; cy += pitch)
    for (int cx = b.x0 + 2; cx < b.x1 - 4; cx += pitch) {
      if (rng.bernoulli(0.7)) {
        uint8_t v = ink_shade(ink_base, rng);
        fill_rect(img, cx, cy, std::min(cx + 3, b.x1), std::min(cy + 1, b.y1), v);
      }
    }
}

void render_object(RgbImage& img, const Box& b, int label, Rng& rng) {
  int ink_base = static_cast<int>(rng.uniform_int(0, 80));
  switch (label) {
    case TEXT_BLOCK:
      render_text(img, b, 2, 5, 3, 6, ink_base, rng);
      break;
    case TITLE:
      render_text(img, b, 3, 7, 4, 8, ink_base, rng);
      break;
    case FIGURE:
      render_figure(img, b, ink_base, rng);
      break;
    case TABLE:
      render_table(img, b, ink_base, rng);
      break;
  }
}

std::string doc_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "doc_%06d", i);
  return buf;
}

}  // namespace

const char* class_name(int label) {
  switch (label) {
    case TEXT_BLOCK: return "TEXT_BLOCK";
    case FIGURE: return "FIGURE";
    case TABLE: return "TABLE";
    case TITLE: return "TITLE";
  }
  return "UNKNOWN";
}

int class_from_name(const std::string& name) {
  for (int c = 0; c < kNumClasses; ++c)
    if (name == class_name(c)) return c;
  throw Error(ErrorCode::CONFIG_ERROR, "unknown object class: " + name);
}

void PageSpec::validate() const {
  if (width_px < 64 || height_px < 64)
    throw Error(ErrorCode::CONFIG_ERROR, "page dims must be >= 64");
  if (n_objects_min < 1 || n_objects_max < n_objects_min)
    throw Error(ErrorCode::CONFIG_ERROR, "bad n_objects range");
  if (object_classes.empty())
    throw Error(ErrorCode::CONFIG_ERROR, "object_classes empty");
  for (int c : object_classes)
    if (c < 0 || c >= kNumClasses)
      throw Error(ErrorCode::CONFIG_ERROR, "bad object class id");
  if (background_gray <= kMaxInk || background_gray > 255)
    throw Error(ErrorCode::CONFIG_ERROR,
                "background_gray must be in (96, 255]");
}

std::pair<RgbImage, GroundTruth> generate_document(const PageSpec& spec, Rng& rng) {
  spec.validate();
  const int W = spec.width_px, H = spec.height_px;
  const int usable_w = W - 2 * kPageMargin, usable_h = H - 2 * kPageMargin;

  int n = static_cast<int>(rng.uniform_int(spec.n_objects_min, spec.n_objects_max));

  const int page_attempts = 25;
  for (int attempt = 0; attempt < page_attempts; ++attempt) {
    std::vector<Box> boxes;
    std::vector<int> labels;
    int grid = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
    bool ok = true;
    for (int k = 0; k < n && ok; ++k) {
      int label = spec.object_classes[static_cast<size_t>(
          rng.uniform_int(0, static_cast<int64_t>(spec.object_classes.size()) - 1))];
      Sizes sz = class_sizes(label);
      int cap_w = clampi(std::min(usable_w * sz.max_frac_num / 16,
                                  usable_w / grid - (grid > 1 ? kObjectMargin : 0)),
                         sz.min_w, usable_w);
      int cap_h = clampi(std::min(usable_h * sz.max_frac_num / 16,
                                  usable_h / grid - (grid > 1 ? kObjectMargin : 0)),
                         sz.min_h, usable_h);
      if (label == TITLE) cap_h = std::min(cap_h, 16);
      bool placed = false;
      for (int t = 0; t < 200 && !placed; ++t) {
        int w = static_cast<int>(rng.uniform_int(sz.min_w, std::max(sz.min_w, cap_w)));
        int h = static_cast<int>(rng.uniform_int(sz.min_h, std::max(sz.min_h, cap_h)));
        if (w > usable_w || h > usable_h) continue;
        int x0 = kPageMargin + static_cast<int>(rng.uniform_int(0, usable_w - w));
        int y0 = kPageMargin + static_cast<int>(rng.uniform_int(0, usable_h - h));
        Box cand{x0, y0, x0 + w - 1, y0 + h - 1};
        Box cd = cand.dilated(kObjectMargin / 2);
        bool clash = false;
        for (const Box& b : boxes)
          if (cd.intersects(b.dilated(kObjectMargin / 2))) clash = true;
        if (!clash) {
          boxes.push_back(cand);
          labels.push_back(label);
          placed = true;
        }
      }
      if (!placed) ok = false;
    }
    if (!ok) continue;

    uint8_t bg = static_cast<uint8_t>(spec.background_gray);
    RgbImage img(W, H, bg);
    GroundTruth gt;
    for (size_t k = 0; k < boxes.size(); ++k) {
      render_object(img, boxes[k], labels[k], rng);
      GtObject obj;
      obj.label = labels[k];
      obj.bbox = boxes[k];
      obj.mask = Bitmap(W, H, 0);
      for (int y = boxes[k].y0; y <= boxes[k].y1; ++y)
        for (int x = boxes[k].x0; x <= boxes[k].x1; ++x) obj.mask.at(x, y) = 1;
      gt.objects.push_back(std::move(obj));
    }
    return {std::move(img), std::move(gt)};
  }
  throw Error(ErrorCode::REGION_PACKING_FAILED,
              "could not place " + std::to_string(n) + " objects on " +
                  std::to_string(W) + "x" + std::to_string(H) + " page");
}

std::string CorpusManifest::resolve(const std::string& rel) const {
  if (base_dir.empty()) return rel;
  return (fs::path(base_dir) / rel).string();
}

void CorpusManifest::save(const std::string& path) const {
  json j;
  j["config_hash"] = config_hash;
  j["records"] = json::array();
  for (const auto& r : records) {
    json jr;
    jr["image_path"] = r.image_path;
    jr["objects"] = json::array();
    for (const auto& o : r.objects) {
      json jo;
      jo["bbox"] = {o.bbox.x0, o.bbox.y0, o.bbox.x1, o.bbox.y1};
      jo["label"] = class_name(o.label);
      jo["mask_path"] = o.mask_path;
      jr["objects"].push_back(jo);
    }
    j["records"].push_back(jr);
  }
  j["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write manifest: " + path);
  out << j.dump(2) << "\n";
}

CorpusManifest CorpusManifest::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot read manifest: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::IO_ERROR, "bad manifest json: " + std::string(e.what()));
  }
  CorpusManifest m;
  m.base_dir = fs::path(path).parent_path().string();
  m.config_hash = j.value("config_hash", "");
  for (const auto& jr : j.at("records")) {
    ManifestRecord r;
    r.image_path = jr.at("image_path").get<std::string>();
    if (!fs::exists(m.resolve(r.image_path)))
      throw Error(ErrorCode::IO_ERROR, "missing image: " + m.resolve(r.image_path));
    for (const auto& jo : jr.value("objects", json::array())) {
      ManifestObject o;
      auto bb = jo.at("bbox");
      o.bbox = Box{bb.at(0), bb.at(1), bb.at(2), bb.at(3)};
      o.label = class_from_name(jo.at("label").get<std::string>());
      o.mask_path = jo.value("mask_path", "");
      if (!o.mask_path.empty() && !fs::exists(m.resolve(o.mask_path)))
        throw Error(ErrorCode::IO_ERROR, "missing mask: " + m.resolve(o.mask_path));
      r.objects.push_back(std::move(o));
    }
    m.records.push_back(std::move(r));
  }
  if (j.contains("split")) {
    m.split.train = j["split"].value("train", std::vector<int>{});
    m.split.val = j["split"].value("val", std::vector<int>{});
    m.split.test = j["split"].value("test", std::vector<int>{});
  }
  return m;
}

CorpusManifest generate_corpus(const PageSpec& spec, int count,
                               const std::string& out_dir,
                               const std::string& config_hash) {
  if (count < 1) throw Error(ErrorCode::CONFIG_ERROR, "count must be >= 1");
  spec.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IO_ERROR, "cannot create dir: " + out_dir);

  CorpusManifest m;
  m.config_hash = config_hash;
  m.base_dir = out_dir;
  for (int i = 0; i < count; ++i) {
    Rng rng(derive_seed(spec.seed, "docgen:doc:" + std::to_string(i)));
    auto [img, gt] = generate_document(spec, rng);
    ManifestRecord rec;
    rec.image_path = doc_name(i) + ".png";
    write_rgb_png(img, m.resolve(rec.image_path));
    for (size_t k = 0; k < gt.objects.size(); ++k) {
      const GtObject& obj = gt.objects[k];
      ManifestObject mo;
      mo.bbox = obj.bbox;
      mo.label = obj.label;
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_obj%02zu_mask.png", k);
      mo.mask_path = doc_name(i) + suffix;
      write_mask_png(obj.mask, m.resolve(mo.mask_path));
      rec.objects.push_back(std::move(mo));
    }
    m.records.push_back(std::move(rec));
  }
  int n_train = std::max(1, count * 8 / 10);
  int n_val = (count - n_train) / 2;
  for (int i = 0; i < count; ++i) {
    if (i < n_train)
      m.split.train.push_back(i);
    else if (i < n_train + n_val)
      m.split.val.push_back(i);
    else
      m.split.test.push_back(i);
  }
  m.save((fs::path(out_dir) / "manifest.json").string());
  return m;
}

GroundTruth load_ground_truth(const CorpusManifest& m, int record_idx) {
  const ManifestRecord& r = m.records.at(record_idx);
  RgbImage img = read_rgb_png(m.resolve(r.image_path));
  GroundTruth gt;
  for (const auto& o : r.objects) {
    GtObject obj;
    obj.label = o.label;
    obj.bbox = o.bbox;
    if (!o.mask_path.empty()) {
      obj.mask = read_mask_png(m.resolve(o.mask_path));
    } else {
      obj.mask = Bitmap(img.width, img.height, 0);
      for (int y = o.bbox.y0; y <= o.bbox.y1; ++y)
        for (int x = o.bbox.x0; x <= o.bbox.x1; ++x) obj.mask.at(x, y) = 1;
    }
    gt.objects.push_back(std::move(obj));
  }
  return gt;
}

}  // namespace selfdocseg::docgen
