#include "volseg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "volseg/errors.hpp"
#include "volseg/optim.hpp"
#include "volseg/rng.hpp"
#include "volseg/volume_io.hpp"

namespace volseg {

namespace fs = std::filesystem;

void validate(const TrainConfig& c) {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (c.max_epochs == 0) throw ValidationError("max_epochs must be positive");
  if (c.patience == 0) throw ValidationError("patience must be positive");
  if (!positive(c.lr_initial) || !positive(c.lr_final)) {
    throw ValidationError("learning rates must be positive");
  }
  if (!(c.weight_decay >= 0.0)) throw ValidationError("weight_decay must be non-negative");
  if (c.batch_size == 0) throw ValidationError("batch_size must be positive");
  if (c.window < 2) throw ValidationError("window must be at least 2 slices");
  if (!(c.lambda_srpp >= 0.0) || !(c.lambda_bd >= 0.0)) {
    throw ValidationError("loss weights must be non-negative");
  }
  if (c.patch == 0 || c.channels < 2) throw ValidationError("patch must be positive, channels >= 2");
  if (!(c.flip_probability >= 0.0 && c.flip_probability <= 1.0)) {
    throw ValidationError("flip_probability must lie in [0, 1]");
  }
  if (!(c.noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be non-negative");
  if (!(c.val_fraction > 0.0 && c.val_fraction < 1.0)) {
    throw ValidationError("val_fraction must lie in (0, 1)");
  }
  if (!positive(c.tau)) throw ValidationError("tau must be positive");
}

TrainConfig parse_train_config(std::vector<ConfigEntry> entries, const std::string& source) {
  ConfigReader r(std::move(entries), source);
  TrainConfig c;
  r.get("max_epochs", c.max_epochs);
  r.get("patience", c.patience);
  r.get("lr_initial", c.lr_initial);
  r.get("lr_final", c.lr_final);
  r.get("weight_decay", c.weight_decay);
  r.get("batch_size", c.batch_size);
  r.get("window", c.window);
  r.get("lambda_srpp", c.lambda_srpp);
  r.get("lambda_bd", c.lambda_bd);
  r.get("seed", c.seed);
  r.get("no_pretrain_analog", c.no_pretrain_analog);
  r.get("no_srpp", c.no_srpp);
  r.get("no_bd", c.no_bd);
  r.get("no_bd_fusion", c.no_bd_fusion);
  r.get("patch", c.patch);
  r.get("channels", c.channels);
  r.get("encoder_seed", c.encoder_seed);
  std::string loss = c.seg_loss == SegLossKind::bce ? "bce" : "dice";
  r.get("seg_loss", loss);
  if (loss == "bce") {
    c.seg_loss = SegLossKind::bce;
  } else if (loss == "dice") {
    c.seg_loss = SegLossKind::dice;
  } else {
    throw ValidationError(source + ": seg_loss must be bce or dice");
  }
  r.get("flip_probability", c.flip_probability);
  r.get("noise_sigma", c.noise_sigma);
  r.get("val_fraction", c.val_fraction);
  r.get("tau", c.tau);
  r.get("check_isolation", c.check_isolation);
  read_dataset_spec(r, c.dataset);
  r.finish();
  validate(c);
  return c;
}

TrainConfig read_train_config(const fs::path& path) {
  return parse_train_config(read_config(path), path.string());
}

std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& c) {
  auto d = format_config_value;
  auto u = [](std::uint64_t v) { return std::to_string(v); };
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  std::vector<std::pair<std::string, std::string>> out{
      {"max_epochs", u(c.max_epochs)},
      {"patience", u(c.patience)},
      {"lr_initial", d(c.lr_initial)},
      {"lr_final", d(c.lr_final)},
      {"weight_decay", d(c.weight_decay)},
      {"batch_size", u(c.batch_size)},
      {"window", u(c.window)},
      {"lambda_srpp", d(c.lambda_srpp)},
      {"lambda_bd", d(c.lambda_bd)},
      {"seed", u(c.seed)},
      {"no_pretrain_analog", b(c.no_pretrain_analog)},
      {"no_srpp", b(c.no_srpp)},
      {"no_bd", b(c.no_bd)},
      {"no_bd_fusion", b(c.no_bd_fusion)},
      {"patch", u(c.patch)},
      {"channels", u(c.channels)},
      {"encoder_seed", u(c.encoder_seed)},
      {"seg_loss", c.seg_loss == SegLossKind::bce ? "bce" : "dice"},
      {"flip_probability", d(c.flip_probability)},
      {"noise_sigma", d(c.noise_sigma)},
      {"val_fraction", d(c.val_fraction)},
      {"tau", d(c.tau)},
      {"check_isolation", b(c.check_isolation)},
  };
  for (auto& e : dataset_spec_entries(c.dataset)) out.push_back(std::move(e));
  return out;
}

namespace {

ModelConfig model_config(const TrainConfig& c, std::size_t classes) {
  ModelConfig m;
  m.encoder.patch = c.patch;
  m.encoder.channels = c.channels;
  m.encoder.seed = c.no_pretrain_analog ? make_rng(c.seed, "encoder-reinit")() : c.encoder_seed;
  m.classes = classes;
  m.param_seed = c.seed;
  m.use_srpp = !c.no_srpp;
  m.use_bd = !c.no_bd;
  m.use_fusion = !c.no_bd_fusion;
  m.weights = {c.lambda_srpp, c.lambda_bd};
  m.seg_loss = c.seg_loss;
  return m;
}

struct Item {
  std::size_t case_index;
  std::size_t first;
  std::size_t count;
};

using Snapshot = std::vector<std::vector<double>>;

Snapshot take_snapshot(const std::vector<ad::Parameter*>& params) {
  Snapshot s;
  for (const auto* p : params) {
    auto v = p->tensor.values();
    s.emplace_back(v.begin(), v.end());
  }
  return s;
}

void restore_snapshot(const std::vector<ad::Parameter*>& params, const Snapshot& s) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::copy(s[i].begin(), s[i].end(), params[i]->tensor.mutable_values().begin());
  }
}

std::vector<metrics::CaseReport> validate_cases(const Model& model, const std::vector<Case>& data,
                                                const std::vector<std::size_t>& val,
                                                const TrainConfig& cfg,
                                                std::vector<std::pair<std::string, LabelMask>>* preds) {
  std::vector<metrics::CaseReport> out;
  for (std::size_t i : val) {
    const Case& c = data[i];
    LabelMask pred = predict_volume(model, c.volume, cfg.window);
    out.push_back({c.name, metrics::evaluate(pred, c.label, cfg.tau)});
    if (preds) preds->emplace_back(c.name, std::move(pred));
  }
  return out;
}

template <class F>
double mean_over(const std::vector<metrics::CaseReport>& v, F f) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const auto& c : v) s += f(c.report);
  return s / static_cast<double>(v.size());
}

std::string format_full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

ModelConfig model_config(const TrainConfig& cfg) { return model_config(cfg, cfg.dataset.classes); }

Split split_cases(std::size_t cases, double val_fraction, std::uint64_t seed) {
  const auto n_val = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(cases) * val_fraction)));
  if (cases < 2 || n_val >= cases) {
    throw ValidationError("need at least one training and one validation case");
  }
  std::vector<std::size_t> idx(cases);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed, "split");
  std::shuffle(idx.begin(), idx.end(), rng);
  Split s;
  s.val.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<std::pair<std::size_t, std::size_t>> slab_windows(std::size_t depth, std::size_t window) {
  if (window == 0) throw ValidationError("window must be positive");
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t first = 0; first < depth; first += window) {
    out.emplace_back(first, std::min(window, depth - first));
  }
  return out;
}

LabelMask predict_volume(const Model& model, const Volume& volume, std::size_t window) {
  const GridShape& s = volume.shape();
  const std::size_t classes = model.config().classes;
  std::vector<double> probs(classes * s.voxels());
  for (auto [first, count] : slab_windows(s.depth, window)) {
    const ad::Tensor p = model.predict(volume.slab(first, count));
    const std::size_t slab_voxels = count * s.slice_size();
    for (std::size_t k = 0; k < classes; ++k) {
      auto row = p.values().subspan(k * slab_voxels, slab_voxels);
      std::copy(row.begin(), row.end(),
                probs.begin() + static_cast<std::ptrdiff_t>(k * s.voxels() + first * s.slice_size()));
    }
  }
  return seg::binarize(ad::Tensor::constant(classes, s.voxels(), std::move(probs)), s,
                       volume.spacing());
}

double RunRecord::mean_dice() const {
  return mean_over(validation, [](const metrics::MetricsReport& r) { return r.mean_dice(); });
}
double RunRecord::mean_iou() const {
  return mean_over(validation, [](const metrics::MetricsReport& r) { return r.mean_iou(); });
}
double RunRecord::mean_hd95() const {
  return mean_over(validation, [](const metrics::MetricsReport& r) { return r.mean_hd95(); });
}
double RunRecord::mean_nsd() const {
  return mean_over(validation, [](const metrics::MetricsReport& r) { return r.mean_nsd(); });
}

TrainResult train(const TrainConfig& cfg, const std::vector<Case>& data) {
  validate(cfg);
  if (data.empty()) throw ValidationError("empty dataset");
  const std::size_t classes = data.front().label.classes();
  for (const auto& c : data) {
    if (c.label.classes() != classes) throw ValidationError("cases disagree on class count");
  }

  TrainResult result{RunRecord{}, Model(model_config(cfg, classes)), {}};
  RunRecord& rec = result.record;
  Model& model = result.model;
  rec.config = cfg;
  rec.seed = cfg.seed;
  rec.encoder_hash_start = model.encoder().hash();

  const Split split = split_cases(data.size(), cfg.val_fraction, cfg.seed);
  for (auto i : split.train) rec.train_cases.push_back(data[i].name);
  for (auto i : split.val) rec.val_cases.push_back(data[i].name);

  std::vector<BoundaryMask> boundaries;
  for (const auto& c : data) boundaries.push_back(derive_boundary(c.label));

  std::vector<Item> items;
  for (auto i : split.train) {
    for (auto [first, count] : slab_windows(data[i].volume.shape().depth, cfg.window)) {
      items.push_back({i, first, count});
    }
  }
  const std::size_t steps_per_epoch = (items.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.max_epochs * steps_per_epoch;

  const auto trainable = model.trainable_parameters();
  std::vector<ad::Parameter*> inactive;
  {
    std::set<const ad::Parameter*> active(trainable.begin(), trainable.end());
    for (auto* p : model.all_parameters()) {
      if (!p->frozen && !active.count(p)) inactive.push_back(p);
    }
  }
  optim::AdamW opt(trainable, {0.9, 0.999, 1e-8, cfg.weight_decay});
  const AugmentConfig aug{cfg.flip_probability, cfg.noise_sigma};

  Snapshot best = take_snapshot(trainable);
  rec.best_val_dice = -1.0;
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    auto order_rng = make_rng(cfg.seed, "epoch-order", epoch);
    std::shuffle(order.begin(), order.end(), order_rng);

    EpochRecord er;
    er.epoch = epoch;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const double lr = optim::cosine_lr(step, total_steps, cfg.lr_initial, cfg.lr_final);
      opt.zero_grad();
      for (auto* p : inactive) p->tensor.zero_grad();

      ad::Tensor batch_total;
      for (std::size_t j = b0; j < b1; ++j) {
        const Item& it = items[order[j]];
        const Case& c = data[it.case_index];
        Sample s{c.volume.slab(it.first, it.count), c.label.slab(it.first, it.count),
                 BoundaryMask(boundaries[it.case_index].slab(it.first, it.count))};
        const std::uint64_t aug_seed = make_rng(cfg.seed, "augment-item", epoch, order[j])();
        s = augment(s, aug, aug_seed);
        const ForwardResult r = model.forward(s.volume, s.label, s.boundary);
        const double total = r.total.item();
        if (!std::isfinite(total)) {
          std::ostringstream msg;
          msg << "non-finite loss at epoch " << epoch << ", step " << step << " (" << c.name
              << " slices " << it.first << "+" << it.count << "): seg=" << r.l_seg.item()
              << " srpp=" << r.l_srpp.item() << " bd=" << r.l_bd.item();
          throw NumericalError(msg.str());
        }
        er.seg += r.l_seg.item();
        er.srpp += r.l_srpp.item();
        er.bd += r.l_bd.item();
        er.total += total;
        if (!r.degenerate_classes.empty()) ++rec.degenerate_boundary_slabs;
        batch_total = batch_total.defined() ? ad::add(batch_total, r.total) : r.total;
      }
      ad::scale(batch_total, 1.0 / static_cast<double>(b1 - b0)).backward();

      if (cfg.check_isolation) {
        for (const auto* p : inactive) {
          for (double g : p->tensor.grad()) {
            if (g != 0.0) throw std::logic_error("gradient reached disabled parameter " + p->name);
          }
        }
      }
      opt.step(lr);
      er.lr = lr;
      ++step;
    }
    const double n = static_cast<double>(items.size());
    er.seg /= n;
    er.srpp /= n;
    er.bd /= n;
    er.total /= n;

    const auto reports = validate_cases(model, data, split.val, cfg, nullptr);
    er.val_dice = mean_over(reports, [](const auto& r) { return r.mean_dice(); });
    er.val_iou = mean_over(reports, [](const auto& r) { return r.mean_iou(); });
    er.val_hd95 = mean_over(reports, [](const auto& r) { return r.mean_hd95(); });
    er.val_nsd = mean_over(reports, [](const auto& r) { return r.mean_nsd(); });
    er.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.epochs.push_back(er);

    if (er.val_dice > rec.best_val_dice) {
      rec.best_val_dice = er.val_dice;
      rec.best_epoch = epoch;
      best = take_snapshot(trainable);
    } else if (epoch - rec.best_epoch >= cfg.patience) {
      rec.stopped_early = true;
      break;
    }
  }

  restore_snapshot(trainable, best);
  rec.steps = step;
  rec.validation = validate_cases(model, data, split.val, cfg, &result.predictions);
  rec.encoder_hash_end = model.encoder().hash();
  return result;
}

void write_losses_csv(std::ostream& out, const RunRecord& rec) {
  out << "epoch,seg,srpp,bd,total,lr\n";
  for (const auto& e : rec.epochs) {
    out << e.epoch << ',' << format_full(e.seg) << ',' << format_full(e.srpp) << ','
        << format_full(e.bd) << ',' << format_full(e.total) << ',' << format_full(e.lr) << '\n';
  }
}

void write_val_csv(std::ostream& out, const RunRecord& rec) {
  out << "epoch,dice,iou,hd95,nsd\n";
  for (const auto& e : rec.epochs) {
    out << e.epoch << ',' << format_full(e.val_dice) << ',' << format_full(e.val_iou) << ','
        << format_full(e.val_hd95) << ',' << format_full(e.val_nsd) << '\n';
  }
}

void write_run(const TrainResult& result, const fs::path& dir) {
  const RunRecord& rec = result.record;
  fs::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream f(dir / name);
    if (!f) throw ValidationError("cannot write " + (dir / name).string());
    return f;
  };

  nlohmann::ordered_json j;
  nlohmann::ordered_json config;
  for (const auto& [k, v] : config_entries(rec.config)) config[k] = v;
  j["config"] = config;
  j["seed"] = rec.seed;
  j["steps"] = rec.steps;
  j["best_epoch"] = rec.best_epoch;
  j["best_val_dice"] = rec.best_val_dice;
  j["stopped_early"] = rec.stopped_early;
  j["encoder_hash_start"] = rec.encoder_hash_start;
  j["encoder_hash_end"] = rec.encoder_hash_end;
  j["degenerate_boundary_slabs"] = rec.degenerate_boundary_slabs;
  j["train_cases"] = rec.train_cases;
  j["val_cases"] = rec.val_cases;
  auto& epochs = j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : rec.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"seg", e.seg},
                      {"srpp", e.srpp},
                      {"bd", e.bd},
                      {"total", e.total},
                      {"lr", e.lr},
                      {"val_dice", e.val_dice},
                      {"val_iou", e.val_iou},
                      {"val_hd95", e.val_hd95},
                      {"val_nsd", e.val_nsd},
                      {"wall_seconds", e.wall_seconds}});
  }
  j["validation"] = {{"dice", rec.mean_dice()},
                     {"iou", rec.mean_iou()},
                     {"hd95", rec.mean_hd95()},
                     {"nsd", rec.mean_nsd()}};
  open("record.json") << j.dump(2) << '\n';

  {
    auto f = open("losses.csv");
    write_losses_csv(f, rec);
  }
  {
    auto f = open("val_metrics.csv");
    write_val_csv(f, rec);
  }
  {
    auto f = open("metrics.csv");
    metrics::write_csv(f, rec.validation);
  }
  {
    auto f = open("config.cfg");
    for (const auto& [k, v] : config_entries(rec.config)) f << k << " = " << v << '\n';
  }
  fs::create_directories(dir / "pred");
  for (const auto& [name, mask] : result.predictions) {
    write_mask(mask, dir / "pred" / (name + ".mask.svol"));
  }
}

SrppProbeResult probe_srpp(const SrppProbeConfig& cfg) {
  if (cfg.train_cases == 0 || cfg.eval_cases == 0 || cfg.steps == 0) {
    throw ValidationError("probe needs training cases, evaluation cases and steps");
  }
  DatasetSpec ds = cfg.dataset;
  ds.seed = cfg.seed;
  ds.cases = cfg.train_cases + cfg.eval_cases;
  const auto cases = generate_dataset(ds);
  const Encoder encoder({cfg.patch, cfg.channels, 0});
  std::vector<FeatureTensor> features;
  for (const auto& c : cases) features.push_back(encoder.encode(c.volume));
  const auto gt = srpp::make_gt_pos(ds.shape.depth);

  srpp::SrppParams params = srpp::SrppParams::init(cfg.channels, cfg.seed);
  optim::AdamW opt(params.parameters(), {0.9, 0.999, 1e-8, cfg.weight_decay});

  auto held_out_error = [&] {
    double s = 0.0;
    for (std::size_t i = cfg.train_cases; i < cases.size(); ++i) {
      const auto pred = srpp::predict_relative_positions(features[i], params);
      s += srpp::mean_abs_offdiag_error(srpp::to_matrix(pred), gt);
    }
    return s / static_cast<double>(cfg.eval_cases);
  };

  SrppProbeResult out;
  out.initial_error = held_out_error();
  std::vector<std::size_t> order(cfg.train_cases);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    if (step % cfg.train_cases == 0) {
      auto rng = make_rng(cfg.seed, "probe-order", step / cfg.train_cases);
      std::shuffle(order.begin(), order.end(), rng);
    }
    opt.zero_grad();
    const auto& z = features[order[step % cfg.train_cases]];
    auto loss = srpp::srpp_loss(srpp::predict_relative_positions(z, params), gt);
    if (!std::isfinite(loss.item())) {
      throw NumericalError("relative-position probe diverged at step " + std::to_string(step));
    }
    out.losses.push_back(loss.item());
    loss.backward();
    opt.step(cfg.lr);
  }
  out.final_error = held_out_error();
  return out;
}

}  // namespace volseg
