// selfdocseg: synthetic-document self-supervised pre-training pipeline.
//
// Subcommands: gen-data, make-mask, pretrain, probe, evaluate, ablate, viz.
// Exit codes: 0 success, 1 validated-input failure, 2 config error.

#include <CLI11.hpp>

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "selfdocseg/config.hpp"
#include "selfdocseg/evalkit.hpp"
#include "selfdocseg/png_io.hpp"
#include "selfdocseg/ssl.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace selfdocseg;

namespace {

struct CommonOpts {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::string out_root;
};

cli::RunConfig load_config(const CommonOpts& o) {
  cli::RunConfig cfg = o.config_path.empty() ? cli::RunConfig::defaults()
                                             : cli::RunConfig::from_file(o.config_path);
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.derive_seeds();
  }
  if (const char* env = std::getenv("SELFDOCSEG_OUT"); env && *env)
    cfg.output_root = env;
  if (!o.out_root.empty()) cfg.output_root = o.out_root;
  cfg.validate();
  return cfg;
}

fs::path default_manifest_path(const cli::RunConfig& cfg) {
  return fs::path(cfg.output_root) / "corpus" / "manifest.json";
}

ssl::PretrainOptions pretrain_options(const cli::RunConfig& cfg) {
  ssl::PretrainOptions opts;
  opts.model = cfg.model;
  opts.train = cfg.train;
  opts.augment = cfg.augment;
  opts.maskgen = cfg.maskgen;
  opts.config_hash = cfg.hash();
  opts.config_echo = cfg.to_json();
  return opts;
}

void write_json(const json& j, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_text(const std::string& text, const fs::path& path) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IO_ERROR, "cannot write " + path.string());
  out << text;
}

// ---- gen-data ---------------------------------------------------------------

int cmd_gen_data(const CommonOpts& common, int count_override) {
  cli::RunConfig cfg = load_config(common);
  int count = count_override > 0 ? count_override : cfg.corpus_count;
  fs::path dir = fs::path(cfg.output_root) / "corpus";
  auto manifest = docgen::generate_corpus(cfg.page, count, dir.string(), cfg.hash());
  std::printf("wrote %zu documents to %s (train/val/test = %zu/%zu/%zu)\n",
              manifest.records.size(), dir.string().c_str(),
              manifest.split.train.size(), manifest.split.val.size(),
              manifest.split.test.size());
  return 0;
}

// ---- make-mask --------------------------------------------------------------

int cmd_make_mask(const CommonOpts& common, const std::string& input,
                  const std::string& output, int threshold, int kernel,
                  int min_area) {
  cli::RunConfig cfg = load_config(common);
  maskgen::MaskGenParams params = cfg.maskgen;
  if (threshold > 0) params.threshold = threshold;
  if (kernel > 0) params.kernel_h = params.kernel_w = kernel;
  if (min_area >= 0) params.min_component_area_px = min_area;
  params.validate();

  std::vector<fs::path> inputs;
  if (fs::is_directory(input)) {
    for (const auto& e : fs::directory_iterator(input))
      if (e.path().extension() == ".png" &&
          e.path().stem().string().find("_mask") == std::string::npos)
        inputs.push_back(e.path());
    std::sort(inputs.begin(), inputs.end());
  } else if (fs::exists(input)) {
    inputs.push_back(input);
  } else {
    throw Error(ErrorCode::IO_ERROR, "no such input: " + input);
  }
  if (inputs.empty()) throw Error(ErrorCode::IO_ERROR, "no input images in " + input);

  fs::create_directories(output);
  json files = json::array();
  for (const fs::path& p : inputs) {
    RgbImage img = read_rgb_png(p.string());
    Bitmap mask = maskgen::generate_layout_mask(img, params);
    fs::path out = fs::path(output) / (p.stem().string() + "_mask.png");
    write_mask_png(mask, out.string());
    files.push_back(out.filename().string());
  }
  write_json(json{{"config_hash", cfg.hash()},
                  {"threshold", params.threshold},
                  {"kernel_h", params.kernel_h},
                  {"kernel_w", params.kernel_w},
                  {"min_component_area_px", params.min_component_area_px},
                  {"files", files}},
             fs::path(output) / "masks_manifest.json");
  std::printf("wrote %zu masks to %s\n", inputs.size(), output.c_str());
  return 0;
}

// ---- pretrain ---------------------------------------------------------------

int cmd_pretrain(const CommonOpts& common, const std::string& manifest_path,
                 int epochs_override, const std::string& resume,
                 const std::string& loss_mode, int workers) {
  cli::RunConfig cfg = load_config(common);
  if (epochs_override > 0) cfg.train.epochs = epochs_override;
  if (!loss_mode.empty()) cfg.train.loss_mode = ssl::loss_mode_from_string(loss_mode);
  fs::path mpath = manifest_path.empty() ? default_manifest_path(cfg)
                                         : fs::path(manifest_path);
  auto manifest = docgen::CorpusManifest::load(mpath.string());
  fs::path out = fs::path(cfg.output_root) / "pretrain";
  ssl::PretrainOptions opts = pretrain_options(cfg);
  opts.workers = std::max(1, workers);
  ssl::PretrainResult res = ssl::pretrain(opts, manifest, out.string(), resume);
  std::printf("pretrained on %d images (%d skipped); checkpoint: %s\n",
              res.images_used, res.images_skipped, res.checkpoint_dir.c_str());
  std::printf("metrics: %s\n", res.metrics_csv.c_str());
  return 0;
}

// ---- probe ------------------------------------------------------------------

int cmd_probe(const CommonOpts& common, const std::string& manifest_path,
              const std::string& checkpoint, double fraction) {
  cli::RunConfig cfg = load_config(common);
  fs::path mpath = manifest_path.empty() ? default_manifest_path(cfg)
                                         : fs::path(manifest_path);
  auto manifest = docgen::CorpusManifest::load(mpath.string());
  fs::path ck = checkpoint.empty()
                    ? fs::path(cfg.output_root) / "pretrain" / "checkpoint"
                    : fs::path(checkpoint);
  ssl::Checkpoint loaded = ssl::load_checkpoint(ck.string());
  uint64_t probe_seed = cfg.eval.seeds.front();
  evalkit::ProbeTrainLog log;
  evalkit::ProbeHead head = evalkit::train_probe(
      loaded.state.online.encoder, manifest, fraction, cfg.eval, probe_seed, &log);
  fs::path out = fs::path(cfg.output_root) / "probe";
  evalkit::save_probe_head(head, out.string(), cfg.hash());
  std::string csv = "epoch,loss\n";
  char line[64];
  for (size_t e = 0; e < log.epoch_loss.size(); ++e) {
    std::snprintf(line, sizeof(line), "%zu,%.10g\n", e, log.epoch_loss[e]);
    csv += line;
  }
  write_text(csv, out / "train_log.csv");
  std::printf("probe head trained (fraction %.2f, seed %llu): %s\n", fraction,
              static_cast<unsigned long long>(probe_seed), out.string().c_str());
  return 0;
}

// ---- evaluate ---------------------------------------------------------------

int cmd_evaluate(const CommonOpts& common, const std::string& manifest_path,
                 const std::string& checkpoint, const std::string& probe_dir,
                 const std::string& split) {
  cli::RunConfig cfg = load_config(common);
  fs::path mpath = manifest_path.empty() ? default_manifest_path(cfg)
                                         : fs::path(manifest_path);
  auto manifest = docgen::CorpusManifest::load(mpath.string());
  fs::path ck = checkpoint.empty()
                    ? fs::path(cfg.output_root) / "pretrain" / "checkpoint"
                    : fs::path(checkpoint);
  ssl::Checkpoint loaded = ssl::load_checkpoint(ck.string());
  fs::path pdir = probe_dir.empty() ? fs::path(cfg.output_root) / "probe"
                                    : fs::path(probe_dir);
  evalkit::ProbeHead head = evalkit::load_probe_head(pdir.string());

  std::vector<int> ids;
  if (split == "train") ids = manifest.split.train;
  else if (split == "val") ids = manifest.split.val;
  else if (split == "test") ids = manifest.split.test;
  else throw Error(ErrorCode::CONFIG_ERROR, "unknown split: " + split);
  if (ids.empty())
    throw Error(ErrorCode::EMPTY_SPLIT, "split '" + split + "' is empty");

  evalkit::EvalReport rep = evalkit::evaluate_probe(loaded.state.online.encoder,
                                                    head, manifest, ids, cfg.eval);
  rep.seed = cfg.eval.seeds.front();
  json out_json = {{"config_hash", cfg.hash()},
                   {"config", cfg.to_json()},
                   {"split", split},
                   {"report", rep.to_json()}};
  fs::path out = fs::path(cfg.output_root) / "eval";
  write_json(out_json, out / "report.json");
  char text[256];
  std::snprintf(text, sizeof(text),
                "split=%s images=%d\npixel_iou=%.4f\npixel_f1=%.4f\nap@%.2f=%.4f\n",
                split.c_str(), rep.n_images, rep.pixel_iou, rep.pixel_f1,
                cfg.eval.iou_thresh, rep.ap_at_50);
  write_text(text, out / "report.txt");
  std::printf("%s", text);
  std::printf("report: %s\n", (out / "report.json").string().c_str());
  return 0;
}

// ---- ablate -----------------------------------------------------------------

struct PretrainTask {
  std::string arm;
  ssl::LossMode loss_mode;
  uint64_t seed;
  fs::path out_dir;
};

void run_pretrain_tasks(const cli::RunConfig& cfg,
                        const docgen::CorpusManifest& manifest,
                        const std::vector<PretrainTask>& tasks, int jobs) {
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const PretrainTask& t = tasks[i];
      try {
        cli::RunConfig arm_cfg = cfg;
        arm_cfg.train.loss_mode = t.loss_mode;
        arm_cfg.train.seed = derive_seed(
            cfg.seed, "ablate:pretrain:" + t.arm + ":" + std::to_string(t.seed));
        ssl::pretrain(pretrain_options(arm_cfg), manifest, t.out_dir.string());
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  int n = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  std::vector<std::thread> pool;
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

int cmd_ablate(const CommonOpts& common, const std::string& manifest_path,
               const std::string& mode, int jobs) {
  cli::RunConfig cfg = load_config(common);
  if (mode != "semi_supervised" && mode != "loss_ablation")
    throw Error(ErrorCode::CONFIG_ERROR, "unknown ablation mode: " + mode);
  fs::path mpath = manifest_path.empty() ? default_manifest_path(cfg)
                                         : fs::path(manifest_path);
  auto manifest = docgen::CorpusManifest::load(mpath.string());
  fs::path root = fs::path(cfg.output_root) / "ablation" / mode;

  std::vector<std::pair<std::string, ssl::LossMode>> pretrain_arms;
  if (mode == "loss_ablation") {
    pretrain_arms = {{"combined", ssl::LossMode::combined},
                     {"det_only", ssl::LossMode::det_only},
                     {"sim_only", ssl::LossMode::sim_only}};
  } else {
    pretrain_arms = {{"combined", ssl::LossMode::combined}};
  }

  std::vector<PretrainTask> tasks;
  for (const auto& [arm, lm] : pretrain_arms)
    for (uint64_t seed : cfg.eval.seeds) {
      fs::path dir = root / arm / ("seed_" + std::to_string(seed));
      if (!fs::exists(dir / "checkpoint" / "manifest.json"))
        tasks.push_back({arm, lm, seed, dir});
    }
  if (!tasks.empty()) {
    std::printf("pretraining %zu ablation arms (jobs=%d)...\n", tasks.size(), jobs);
    run_pretrain_tasks(cfg, manifest, tasks, jobs);
  }

  auto checkpoints_of = [&](const std::string& arm) {
    std::map<uint64_t, std::string> out;
    for (uint64_t seed : cfg.eval.seeds)
      out[seed] =
          (root / arm / ("seed_" + std::to_string(seed)) / "checkpoint").string();
    return out;
  };

  std::vector<evalkit::AblationArmSpec> arms;
  if (mode == "loss_ablation") {
    for (const auto& [arm, lm] : pretrain_arms) {
      evalkit::AblationArmSpec spec;
      spec.name = arm;
      spec.checkpoints = checkpoints_of(arm);
      arms.push_back(std::move(spec));
    }
    // untrained reference encoder, one fresh init per seed
    evalkit::AblationArmSpec random_arm;
    random_arm.name = "random";
    for (uint64_t seed : cfg.eval.seeds) {
      fs::path dir = root / "random" / ("seed_" + std::to_string(seed)) / "checkpoint";
      if (!fs::exists(dir / "manifest.json")) {
        ssl::TrainState st = ssl::make_train_state(
            cfg.model, derive_seed(cfg.seed, "ablate:random:" + std::to_string(seed)));
        ssl::save_checkpoint(st, pretrain_options(cfg), dir.string());
      }
      random_arm.checkpoints[seed] = dir.string();
    }
    arms.push_back(std::move(random_arm));
  } else {
    for (double f : cfg.eval.fractions) {
      evalkit::AblationArmSpec spec;
      char name[32];
      std::snprintf(name, sizeof(name), "frac_%03d", static_cast<int>(f * 100 + 0.5));
      spec.name = name;
      spec.fraction = f;
      spec.checkpoints = checkpoints_of("combined");
      arms.push_back(std::move(spec));
    }
  }

  evalkit::AblationReport report =
      evalkit::ablation_harness(mode, manifest, arms, cfg.eval);
  json out_json = {{"config_hash", cfg.hash()},
                   {"config", cfg.to_json()},
                   {"report", report.to_json()}};
  write_json(out_json, root / "report.json");
  write_text(report.to_text(), root / "report.txt");
  std::printf("%s", report.to_text().c_str());
  std::printf("report: %s\n", (root / "report.json").string().c_str());
  return 0;
}

// ---- viz --------------------------------------------------------------------

int cmd_viz(const CommonOpts& common, const std::string& image_path,
            const std::string& checkpoint, const std::string& probe_dir,
            const std::string& out_file) {
  cli::RunConfig cfg = load_config(common);
  if (!fs::exists(image_path))
    throw Error(ErrorCode::IO_ERROR, "no such image: " + image_path);
  RgbImage img = read_rgb_png(image_path);
  fs::path ck = checkpoint.empty()
                    ? fs::path(cfg.output_root) / "pretrain" / "checkpoint"
                    : fs::path(checkpoint);
  ssl::Checkpoint loaded = ssl::load_checkpoint(ck.string());
  fs::path pdir = probe_dir.empty() ? fs::path(cfg.output_root) / "probe"
                                    : fs::path(probe_dir);
  evalkit::ProbeHead head = evalkit::load_probe_head(pdir.string());
  auto dets = evalkit::segment(img, loaded.state.online.encoder, head,
                               cfg.eval.prob_threshold, cfg.eval.min_area);
  fs::path out = out_file.empty()
                     ? fs::path(cfg.output_root) / "viz" /
                           (fs::path(image_path).stem().string() + "_overlay.png")
                     : fs::path(out_file);
  fs::create_directories(out.parent_path());
  evalkit::visualize(img, dets, out.string());
  std::printf("%zu detections -> %s\n", dets.size(), out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised document-layout pre-training at desk scale"};
  app.require_subcommand(1);

  CommonOpts common;
  int count_override = 0;
  std::string mm_input, mm_output;
  int mm_threshold = 0, mm_kernel = 0, mm_min_area = -1;
  std::string manifest_path, resume, loss_mode;
  int epochs_override = 0;
  std::string checkpoint, probe_dir, split = "test", mode = "loss_ablation";
  double fraction = 1.0;
  int jobs = 1;
  int workers = 1;
  std::string image_path, out_file;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON config file");
    sub->add_option("--seed", common.seed, "override the global seed");
    sub->add_option("--out", common.out_root, "override the output root");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  add_common(gen);
  gen->add_option("--count", count_override, "number of pages");

  CLI::App* mm = app.add_subcommand("make-mask", "run the layout-mask pipeline");
  add_common(mm);
  mm->add_option("--input", mm_input, "input image or directory")->required();
  mm->add_option("--output", mm_output, "output directory")->required();
  mm->add_option("--threshold", mm_threshold, "global threshold");
  mm->add_option("--kernel", mm_kernel, "square erosion kernel size");
  mm->add_option("--min-area", mm_min_area, "minimum component area");

  CLI::App* pt = app.add_subcommand("pretrain", "self-supervised pre-training");
  add_common(pt);
  pt->add_option("--manifest", manifest_path, "corpus manifest path");
  pt->add_option("--epochs", epochs_override, "override train.epochs");
  pt->add_option("--checkpoint", resume, "resume from this checkpoint");
  pt->add_option("--loss-mode", loss_mode, "combined|sim_only|det_only");
  pt->add_option("--workers", workers, "data-preparation workers (default 1)");

  CLI::App* pr = app.add_subcommand("probe", "train a frozen-encoder probe");
  add_common(pr);
  pr->add_option("--manifest", manifest_path, "corpus manifest path");
  pr->add_option("--checkpoint", checkpoint, "pretrained checkpoint dir");
  pr->add_option("--fraction", fraction, "labeled fraction in (0,1]");

  CLI::App* ev = app.add_subcommand("evaluate", "evaluate a probe head");
  add_common(ev);
  ev->add_option("--manifest", manifest_path, "corpus manifest path");
  ev->add_option("--checkpoint", checkpoint, "pretrained checkpoint dir");
  ev->add_option("--probe", probe_dir, "probe head dir");
  ev->add_option("--split", split, "train|val|test");

  CLI::App* ab = app.add_subcommand("ablate", "run an ablation study");
  add_common(ab);
  ab->add_option("--manifest", manifest_path, "corpus manifest path");
  ab->add_option("--mode", mode, "semi_supervised|loss_ablation");
  ab->add_option("--jobs", jobs, "parallel pretraining jobs");

  CLI::App* vz = app.add_subcommand("viz", "overlay detections on an image");
  add_common(vz);
  vz->add_option("--image", image_path, "input image")->required();
  vz->add_option("--checkpoint", checkpoint, "pretrained checkpoint dir");
  vz->add_option("--probe", probe_dir, "probe head dir");
  vz->add_option("--out-file", out_file, "output PNG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(common, count_override);
    if (mm->parsed())
      return cmd_make_mask(common, mm_input, mm_output, mm_threshold, mm_kernel,
                           mm_min_area);
    if (pt->parsed())
      return cmd_pretrain(common, manifest_path, epochs_override, resume, loss_mode,
                          workers);
    if (pr->parsed()) return cmd_probe(common, manifest_path, checkpoint, fraction);
    if (ev->parsed())
      return cmd_evaluate(common, manifest_path, checkpoint, probe_dir, split);
    if (ab->parsed()) return cmd_ablate(common, manifest_path, mode, jobs);
    if (vz->parsed())
      return cmd_viz(common, image_path, checkpoint, probe_dir, out_file);
  } catch (const Error& e) {
    std::cerr << "error [" << error_code_name(e.code) << "]: " << e.what() << "\n";
    return e.code == ErrorCode::CONFIG_ERROR ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
