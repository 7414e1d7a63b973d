#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "mscmt/ablate.hpp"
#include "mscmt/checkpoint.hpp"
#include "mscmt/evaluate.hpp"
#include "mscmt/gradcheck_suite.hpp"
#include "mscmt/import.hpp"
#include "mscmt/manifest.hpp"
#include "mscmt/preprocess.hpp"
#include "mscmt/roi.hpp"
#include "mscmt/synth.hpp"
#include "mscmt/train.hpp"

namespace fs = std::filesystem;
using namespace mscmt;

namespace {

struct CommonOpts {
  std::string config;
  std::optional<long long> seed;
  std::optional<int> fold;
  std::string out = ".";
  bool deterministic = true;
};

void add_common(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config, "run configuration (flat key=value lines)")
      ->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "override the config seed");
  sub->add_option("--fold", o.fold, "override the held-out fold");
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
  sub->add_flag("--deterministic,!--no-deterministic", o.deterministic,
                "pin wall-clock report fields for byte-stable output (default on)");
}

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) cfg.seed = static_cast<uint64_t>(*o.seed);
  if (o.fold) cfg.fold = *o.fold;
  validate(cfg);
  return cfg;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("failed writing " + path.string());
}

void check_fold_in_plan(const RunConfig& cfg, const FoldPlan& plan) {
  if (cfg.fold >= plan.k)
    throw UsageError("fold " + std::to_string(cfg.fold) + " outside the plan's k=" +
                     std::to_string(plan.k));
}

// The config that governs a checkpointed network: the checkpoint's own config
// unless the caller supplies one (which must then fingerprint-match when the
// parameters are restored).
RunConfig checkpoint_config(const Checkpoint& ck, const CommonOpts& o) {
  if (!o.config.empty()) return resolve_config(o);
  RunConfig cfg = parse_run_config(ck.config_text);
  if (o.seed) cfg.seed = static_cast<uint64_t>(*o.seed);
  if (o.fold) cfg.fold = *o.fold;
  validate(cfg);
  return cfg;
}

bool is_region_checkpoint(const Checkpoint& ck) {
  for (const auto& p : ck.params)
    if (p.name == "enc1.proj.w") return true;
  return false;
}

int cmd_synth_gen(const CommonOpts& o, int count, int size, int k, bool patient_disjoint) {
  RunConfig cfg = resolve_config(o);
  auto samples = synth_generate(count, cfg.seed, size);
  auto plan = stratified_kfold(samples, k, cfg.seed, patient_disjoint);
  fs::create_directories(o.out);
  auto manifest = save_manifest(samples, o.out);
  save_fold_plan(plan, fs::path(o.out) / "folds.json");
  std::printf("wrote %d phantoms (%dx%d, %d folds) to %s\n", count, size, size, k,
              manifest.string().c_str());
  return 0;
}

int cmd_import(const CommonOpts& o, const std::string& dir, const ImportKeys& keys,
               const std::string& label_map_text, int expect_size) {
  std::map<int, int> label_map;
  std::stringstream ss(label_map_text);
  std::string pair;
  while (std::getline(ss, pair, ',')) {
    auto eq = pair.find('=');
    if (eq == std::string::npos)
      throw UsageError("label map entries look like raw=mapped, got '" + pair + "'");
    label_map[detail::parse_int("label-map", pair.substr(0, eq))] =
        static_cast<int>(detail::parse_int("label-map", pair.substr(eq + 1)));
  }
  fs::create_directories(o.out);
  ImportResult res = import_external_dataset(dir, keys, label_map, o.out, expect_size);
  for (const auto& w : res.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
  std::printf("imported %d, skipped %d -> %s\n", res.imported, res.skipped,
              res.manifest_path.string().c_str());
  return 0;
}

int cmd_preprocess(const CommonOpts& o, const std::string& manifest) {
  RunConfig cfg = resolve_config(o);
  auto samples = load_manifest(manifest);
  for (auto& s : samples) s = preprocess_sample(s, cfg.pre);
  fs::create_directories(o.out);
  auto path = save_manifest(samples, o.out);
  std::printf("enhanced %zu samples -> %s\n", samples.size(), path.string().c_str());
  return 0;
}

int cmd_train(NetKind kind, const CommonOpts& o, const std::string& manifest,
              const std::string& plan_path, const std::string& resume) {
  RunConfig cfg = resolve_config(o);
  auto samples = load_manifest(manifest);
  FoldPlan plan = load_fold_plan(plan_path);
  check_fold_in_plan(cfg, plan);
  auto train_set = training_split(samples, plan, cfg.fold);

  Network<float> net = kind == NetKind::region ? build_region_net<float>(cfg.net, cfg.seed)
                                               : build_mscmt_net<float>(cfg.net, cfg.seed);
  Rng rng(mix_seed(cfg.seed, 1));
  int start_epoch = 0;
  if (!resume.empty()) {
    Checkpoint ck = load_checkpoint(resume);
    rng = restore_network(ck, cfg, net);
    start_epoch = static_cast<int>(ck.epoch);
    if (start_epoch >= cfg.epochs)
      throw UsageError("checkpoint is already at epoch " + std::to_string(start_epoch) +
                       " of " + std::to_string(cfg.epochs));
  }

  auto trace = kind == NetKind::region ? train_region(net, train_set, cfg, rng, start_epoch)
                                       : train_main(net, train_set, cfg, rng, start_epoch);
  for (size_t i = 0; i < trace.size(); ++i)
    std::printf("epoch %3d  loss %.6f\n", start_epoch + static_cast<int>(i) + 1, trace[i]);

  fs::create_directories(o.out);
  const std::string stem = kind == NetKind::region ? "region" : "main";
  const fs::path ckpt_path = fs::path(o.out) / (stem + ".ckpt");
  save_checkpoint(make_checkpoint(net, cfg, cfg.epochs, rng), ckpt_path);
  nlohmann::ordered_json j;
  j["start_epoch"] = start_epoch;
  j["loss"] = trace;
  write_text(fs::path(o.out) / (stem + "_trace.json"), j.dump(2) + "\n");
  std::printf("trained %zu samples (fold %d held out) -> %s\n", train_set.size(), cfg.fold,
              ckpt_path.string().c_str());
  return 0;
}

int cmd_extract_roi(const CommonOpts& o, const std::string& ckpt_path,
                    const std::string& manifest) {
  Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig cfg = checkpoint_config(ck, o);
  auto net = build_region_net<float>(cfg.net, cfg.seed);
  restore_network(ck, cfg, net);
  auto samples = load_manifest(manifest);

  RoiOptions opt{cfg.crop_half, cfg.crop_clamp ? CropMode::clamp : CropMode::drop,
                 cfg.fallback_center};
  RoiBatchResult res = extract_roi_all(net, samples, opt);
  for (const auto& line : res.dropped) std::fprintf(stderr, "dropped %s\n", line.c_str());
  for (const auto& id : res.flagged)
    std::fprintf(stderr, "flagged %s: empty prediction, used the center fallback\n",
                 id.c_str());
  if (res.kept.empty()) throw DataError("every sample was dropped; nothing to write");
  fs::create_directories(o.out);
  auto path = save_manifest(res.kept, o.out);
  std::printf("kept %zu of %zu samples (%zu dropped, %zu flagged) -> %s\n", res.kept.size(),
              samples.size(), res.dropped.size(), res.flagged.size(), path.string().c_str());
  return 0;
}

int cmd_evaluate(const CommonOpts& o, const std::string& ckpt_path, const std::string& manifest,
                 const std::string& plan_path) {
  auto t0 = std::chrono::steady_clock::now();
  Checkpoint ck = load_checkpoint(ckpt_path);
  RunConfig cfg = checkpoint_config(ck, o);
  auto samples = load_manifest(manifest);
  FoldPlan plan = load_fold_plan(plan_path);
  check_fold_in_plan(cfg, plan);

  FoldMetrics fm;
  if (is_region_checkpoint(ck)) {
    auto net = build_region_net<float>(cfg.net, cfg.seed);
    restore_network(ck, cfg, net);
    fm = evaluate_fold(samples, plan, cfg.fold, region_predictor(net), cfg.net.num_classes);
  } else {
    auto net = build_mscmt_net<float>(cfg.net, cfg.seed);
    restore_network(ck, cfg, net);
    fm = evaluate_fold(samples, plan, cfg.fold, network_predictor(net), cfg.net.num_classes);
  }
  MetricsReport rep = aggregate_report({fm}, fingerprint_hex(cfg),
                                       o.deterministic ? 0.0 : seconds_since(t0));
  fs::create_directories(o.out);
  const fs::path report_path = fs::path(o.out) / "report.json";
  write_text(report_path, report_to_json(rep).dump(2) + "\n");
  std::printf("fold %d (%d samples): dice %.4f  iou %.4f  mean_iou %.4f", fm.fold,
              fm.sample_count, fm.dice, fm.iou, fm.mean_iou);
  if (fm.cls) std::printf("  accuracy %.4f", fm.cls->accuracy);
  std::printf("\nreport -> %s\n", report_path.string().c_str());
  return 0;
}

int cmd_ablate(const CommonOpts& o, const std::string& manifest, const std::string& plan_path) {
  RunConfig cfg = resolve_config(o);
  auto samples = load_manifest(manifest);
  FoldPlan plan = load_fold_plan(plan_path);
  check_fold_in_plan(cfg, plan);
  AblationReport rep = run_ablation(cfg, samples, plan);
  fs::create_directories(o.out);
  const std::string text = ablation_to_text(rep);
  write_text(fs::path(o.out) / "ablation.json", ablation_to_json(rep).dump(2) + "\n");
  write_text(fs::path(o.out) / "ablation.txt", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  for (const auto& row : run_gradcheck_suite()) {
    const bool pass = row.result.max_rel_err <= 1e-4;
    ok = ok && pass;
    std::printf("%-45s checked %4d  max rel err %.3e  %s\n", row.name.c_str(),
                row.result.checked, row.result.max_rel_err, pass ? "ok" : "FAIL");
    if (!pass) std::printf("  worst: %s\n", row.result.worst.c_str());
  }
  if (!ok) throw NumericError("gradient check failed");
  std::printf("all gradients agree with finite differences\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deterministic two-stage tumor segmentation and classification pipeline"};
  app.require_subcommand(1);

  CommonOpts o;
  int count = 600, size = 128, k = 5, expect_size = 512;
  bool patient_disjoint = false;
  std::string in_dir, manifest, plan_path, ckpt_path, resume, label_map = "0=0,1=1,2=2";
  ImportKeys keys;

  auto* synth = app.add_subcommand("synth-gen", "generate a synthetic phantom dataset");
  add_common(synth, o);
  synth->add_option("--count", count, "number of phantoms")->capture_default_str();
  synth->add_option("--size", size, "square image extent")->capture_default_str();
  synth->add_option("--k", k, "number of folds")->capture_default_str();
  synth->add_flag("--patient-disjoint", patient_disjoint,
                  "assign whole patients to folds");

  auto* import = app.add_subcommand("import", "import a directory of JSON sample records");
  add_common(import, o);
  import->add_option("dir", in_dir, "dataset directory")->required();
  import->add_option("--image-key", keys.image)->capture_default_str();
  import->add_option("--mask-key", keys.mask)->capture_default_str();
  import->add_option("--label-key", keys.label)->capture_default_str();
  import->add_option("--patient-key", keys.patient)->capture_default_str();
  import->add_option("--label-map", label_map, "raw=mapped pairs, comma separated")
      ->capture_default_str();
  import->add_option("--expect-size", expect_size, "warn when extents differ from this")
      ->capture_default_str();

  auto* prep = app.add_subcommand("preprocess", "median filter + CLAHE enhancement");
  add_common(prep, o);
  prep->add_option("manifest", manifest)->required()->check(CLI::ExistingFile);

  auto* tr = app.add_subcommand("train-region", "train the tumor region detector");
  add_common(tr, o);
  tr->add_option("manifest", manifest)->required()->check(CLI::ExistingFile);
  tr->add_option("folds", plan_path)->required()->check(CLI::ExistingFile);
  tr->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* roi = app.add_subcommand("extract-roi", "crop tumor windows with a trained detector");
  add_common(roi, o);
  roi->add_option("checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  roi->add_option("manifest", manifest)->required()->check(CLI::ExistingFile);

  auto* tm = app.add_subcommand("train-main", "train the multiscale multitask network");
  add_common(tm, o);
  tm->add_option("manifest", manifest)->required()->check(CLI::ExistingFile);
  tm->add_option("folds", plan_path)->required()->check(CLI::ExistingFile);
  tm->add_option("--resume", resume, "checkpoint to continue from")->check(CLI::ExistingFile);

  auto* ev = app.add_subcommand("evaluate", "score a checkpoint on its held-out fold");
  add_common(ev, o);
  ev->add_option("checkpoint", ckpt_path)->required()->check(CLI::ExistingFile);
  ev->add_option("manifest", manifest)->required()->check(CLI::ExistingFile);
  ev->add_option("folds", plan_path)->required()->check(CLI::ExistingFile);

  auto* ab = app.add_subcommand("ablate", "run the three-table variant ladder");
  add_common(ab, o);
  ab->add_option("manifest", manifest)->required()->check(CLI::ExistingFile);
  ab->add_option("folds", plan_path)->required()->check(CLI::ExistingFile);

  app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth_gen(o, count, size, k, patient_disjoint);
    if (import->parsed()) return cmd_import(o, in_dir, keys, label_map, expect_size);
    if (prep->parsed()) return cmd_preprocess(o, manifest);
    if (tr->parsed()) return cmd_train(NetKind::region, o, manifest, plan_path, resume);
    if (roi->parsed()) return cmd_extract_roi(o, ckpt_path, manifest);
    if (tm->parsed()) return cmd_train(NetKind::mscmt, o, manifest, plan_path, resume);
    if (ev->parsed()) return cmd_evaluate(o, ckpt_path, manifest, plan_path);
    if (ab->parsed()) return cmd_ablate(o, manifest, plan_path);
    return cmd_gradcheck();
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
