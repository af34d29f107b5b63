#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "volseg/augment.hpp"
#include "volseg/dataset.hpp"
#include "volseg/metrics.hpp"
#include "volseg/model.hpp"

namespace volseg {

struct TrainConfig {
  std::size_t max_epochs = 50;
  std::size_t patience = 20;  // epochs without a new best validation Dice
  double lr_initial = 5.0e-5;
  double lr_final = 5.0e-6;
  double weight_decay = 0.1;
  std::size_t batch_size = 4;
  std::size_t window = 6;  // slices per training/inference slab
  double lambda_srpp = 0.01;
  double lambda_bd = 0.1;
  std::uint64_t seed = 0;

  bool no_pretrain_analog = false;  // resample the frozen encoder from the run seed
  bool no_srpp = false;
  bool no_bd = false;
  bool no_bd_fusion = false;

  std::size_t patch = 4;
  std::size_t channels = 16;
  std::uint64_t encoder_seed = 0;
  SegLossKind seg_loss = SegLossKind::bce;

  double flip_probability = 0.5;
  double noise_sigma = 0.02;
  double val_fraction = 0.2;
  double tau = metrics::kDefaultTau;

  /// Check after every step that disabled branches received no gradient.
  bool check_isolation = true;

  DatasetSpec dataset;  // used when no data directory is given (ablate)
};

/// Throws ValidationError on out-of-range values.
void validate(const TrainConfig& cfg);
TrainConfig read_train_config(const std::filesystem::path& path);
/// Parses the entries of a config file; unknown keys throw.
TrainConfig parse_train_config(std::vector<ConfigEntry> entries, const std::string& source);
/// Every key with its current value, in a fixed order.
std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& cfg);

ModelConfig model_config(const TrainConfig& cfg);

/// Train/validation partition of case indices, seeded.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};
Split split_cases(std::size_t cases, double val_fraction, std::uint64_t seed);

/// Consecutive windows [first, first + count) covering `depth` with
/// stride = window; the trailing window may be shorter.
std::vector<std::pair<std::size_t, std::size_t>> slab_windows(std::size_t depth, std::size_t window);

/// Full-volume segmentation probabilities, slab by slab, binarised.
LabelMask predict_volume(const Model& model, const Volume& volume, std::size_t window);

struct EpochRecord {
  std::size_t epoch = 0;
  double seg = 0.0;    // mean over training slabs
  double srpp = 0.0;
  double bd = 0.0;
  double total = 0.0;
  double lr = 0.0;     // rate used by the epoch's last step
  double val_dice = 0.0;
  double val_iou = 0.0;
  double val_hd95 = 0.0;
  double val_nsd = 0.0;
  double wall_seconds = 0.0;
};

struct RunRecord {
  TrainConfig config;
  std::uint64_t seed = 0;
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  double best_val_dice = 0.0;
  bool stopped_early = false;
  std::size_t steps = 0;
  std::uint64_t encoder_hash_start = 0;
  std::uint64_t encoder_hash_end = 0;
  std::size_t degenerate_boundary_slabs = 0;  // slabs whose boundary loss had a degenerate class
  /// Validation metrics of the restored best model, per case.
  std::vector<metrics::CaseReport> validation;
  std::vector<std::string> train_cases;
  std::vector<std::string> val_cases;

  double mean_dice() const;
  double mean_iou() const;
  double mean_hd95() const;
  double mean_nsd() const;
};

struct TrainResult {
  RunRecord record;
  Model model;
  /// Binarised predictions of the validation cases, same order as record.validation.
  std::vector<std::pair<std::string, LabelMask>> predictions;
};

/// Runs the full loop. Throws NumericalError (with the epoch, step and loss
/// components) on a non-finite loss or gradient.
TrainResult train(const TrainConfig& cfg, const std::vector<Case>& dataset);

/// record.json, losses.csv, val_metrics.csv, metrics.csv, config.cfg and
/// pred/<case>.mask.svol.
void write_run(const TrainResult& result, const std::filesystem::path& dir);
void write_losses_csv(std::ostream& out, const RunRecord& record);
void write_val_csv(std::ostream& out, const RunRecord& record);

/// Learnability check for the relative-position head on its own.
struct SrppProbeConfig {
  std::uint64_t seed = 0;
  std::size_t steps = 300;
  double lr = 3e-3;
  double weight_decay = 0.0;
  std::size_t train_cases = 20;
  std::size_t eval_cases = 5;
  DatasetSpec dataset;  // defaults: drift_x = 1, D = 6
  std::size_t patch = 4;
  std::size_t channels = 16;
};

struct SrppProbeResult {
  double initial_error = 0.0;  // mean |P - GT| off the diagonal, held-out cases
  double final_error = 0.0;
  std::vector<double> losses;  // training loss per step
};

SrppProbeResult probe_srpp(const SrppProbeConfig& cfg);

}  // namespace volseg
