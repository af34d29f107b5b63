// volseg: phantom generation, training, evaluation, ablation and reporting.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "volseg/ablate.hpp"
#include "volseg/checks.hpp"
#include "volseg/dataset.hpp"
#include "volseg/errors.hpp"
#include "volseg/metrics.hpp"
#include "volseg/report.hpp"
#include "volseg/train.hpp"
#include "volseg/volume_io.hpp"

namespace fs = std::filesystem;
using namespace volseg;

namespace {

int cmd_generate(const fs::path& spec_path, const fs::path& out) {
  ConfigReader r(read_config(spec_path), spec_path.string());
  DatasetSpec spec;
  read_dataset_spec(r, spec);
  r.finish();
  const auto cases = generate_dataset(spec);
  write_dataset(cases, out);
  std::printf("wrote %zu cases to %s\n", cases.size(), out.string().c_str());
  return 0;
}

int cmd_train(const fs::path& config, const fs::path& data, const fs::path& out) {
  const TrainConfig cfg = read_train_config(config);
  const auto cases = read_dataset(data);
  const auto result = train(cfg, cases);
  write_run(result, out);
  const auto& rec = result.record;
  std::printf("epochs %zu, best epoch %zu, val dice %.4f iou %.4f hd95 %.4f nsd %.4f\n",
              rec.epochs.size(), rec.best_epoch, rec.mean_dice(), rec.mean_iou(), rec.mean_hd95(),
              rec.mean_nsd());
  return 0;
}

int cmd_eval(const fs::path& pred_dir, const fs::path& gt_dir, double tau, const fs::path& out) {
  const auto preds = read_masks(pred_dir);
  if (preds.empty()) throw ValidationError("no predictions in " + pred_dir.string());
  std::vector<metrics::CaseReport> reports;
  for (const auto& [name, pred] : preds) {
    const fs::path gt_path = gt_dir / (name + ".mask.svol");
    if (!fs::exists(gt_path)) throw ValidationError("no ground truth for " + name);
    reports.push_back({name, metrics::evaluate(pred, read_mask(gt_path), tau)});
  }
  std::ofstream f(out);
  if (!f) throw ValidationError("cannot write " + out.string());
  metrics::write_csv(f, reports);
  std::printf("evaluated %zu cases\n", reports.size());
  return 0;
}

}  // namespace

namespace {

int cmd_ablate(const fs::path& config, std::size_t seeds, const fs::path& out, bool window_sweep,
               bool lambda_grid, std::size_t threads,
               const std::vector<std::string>& variants) {
  const TrainConfig base = read_train_config(config);
  const auto cases = generate_dataset(base.dataset);
  AblateOptions opt;
  opt.seeds = seeds;
  opt.window_sweep = window_sweep;
  opt.lambda_grid = lambda_grid;
  opt.threads = threads;
  opt.variants = variants;
  const auto rows = ablate(base, cases, opt, out / "runs");
  std::ofstream table(out / "ablation.csv");
  std::ofstream summary(out / "ablation_summary.csv");
  if (!table || !summary) throw ValidationError("cannot write to " + out.string());
  write_ablation_csv(table, rows);
  write_ablation_summary(summary, rows);
  write_ablation_summary(std::cout, rows);
  return 0;
}

int cmd_gradcheck(const std::string& module) {
  bool ok = true;
  for (const auto& c : model_gradchecks(module)) {
    std::printf("%-6s %s  max rel error %.3e over %zu coordinates (worst %s[%zu])\n",
                c.loss.c_str(), c.report.passed ? "PASS" : "FAIL", c.report.max_rel_error,
                c.report.coordinates, c.report.worst_parameter.c_str(), c.report.worst_index);
    ok = ok && c.report.passed;
  }
  if (!ok) throw NumericalError("gradient check failed");
  return 0;
}

int cmd_report(const fs::path& runs, const fs::path& out) {
  const std::size_t n = write_report(runs, out);
  std::printf("summarised %zu runs into %s\n", n, out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Volumetric segmentation with slice-position and boundary heads"};
  app.require_subcommand(1);

  fs::path spec, out, config, data, pred, gt, runs;
  double tau = metrics::kDefaultTau;
  std::size_t seeds = 5, threads = 0;
  bool window_sweep = false, lambda_grid = false;
  std::string module = "all";
  std::vector<std::string> variants;

  auto* gen = app.add_subcommand("generate", "Write a synthetic phantom dataset");
  gen->add_option("--spec", spec, "phantom.* key = value file")->required();
  gen->add_option("--out", out, "Output directory")->required();

  auto* tr = app.add_subcommand("train", "Train one model");
  tr->add_option("--config", config, "Training config")->required();
  tr->add_option("--data", data, "Dataset directory")->required();
  tr->add_option("--out", out, "Run directory")->required();

  auto* ev = app.add_subcommand("eval", "Score predicted masks against ground truth");
  ev->add_option("--pred", pred, "Directory of <case>.mask.svol predictions")->required();
  ev->add_option("--gt", gt, "Directory of <case>.mask.svol ground truth")->required();
  ev->add_option("--tau", tau, "NSD tolerance");
  ev->add_option("--out", out, "CSV path")->required();

  auto* ab = app.add_subcommand("ablate", "Run the ablation grid on generated phantoms");
  ab->add_option("--config", config, "Base training config")->required();
  ab->add_option("--seeds", seeds, "Seeds per configuration");
  ab->add_option("--out", out, "Output directory")->default_val("ablation");
  ab->add_flag("--window-sweep", window_sweep, "Add window sizes 3, 6, 12");
  ab->add_flag("--lambda-grid", lambda_grid, "Add the loss-weight grid");
  ab->add_option("--threads", threads, "Parallel runs (0 = all cores)");
  ab->add_option("--variants", variants, "Subset of full,no_pretrain_analog,no_srpp,no_bd,no_bd_fusion")
      ->delimiter(',');

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every loss");
  gc->add_option("--module", module, "all, srpp, bd, seg or total")
      ->check(CLI::IsMember({"all", "srpp", "bd", "seg", "total"}));

  auto* rp = app.add_subcommand("report", "Collect run records into CSV tables");
  rp->add_option("--runs", runs, "Directory holding run directories")->required();
  rp->add_option("--out", out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_generate(spec, out);
    if (*tr) return cmd_train(config, data, out);
    if (*ev) return cmd_eval(pred, gt, tau, out);
    if (*ab) return cmd_ablate(config, seeds, out, window_sweep, lambda_grid, threads,
                                 variants);
    if (*gc) return cmd_gradcheck(module);
    if (*rp) return cmd_report(runs, out);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
