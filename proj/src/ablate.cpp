#include "volseg/ablate.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <ostream>
#include <thread>

#include "volseg/errors.hpp"
#include "volseg/metrics.hpp"

namespace volseg {

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"full", "no_pretrain_analog", "no_srpp", "no_bd",
                                          "no_bd_fusion"};
  return v;
}

const std::vector<std::pair<double, double>>& lambda_grid() {
  static const std::vector<std::pair<double, double>> g{
      {0.01, 0.1}, {0.01, 0.3}, {0.01, 0.5}, {0.03, 0.1}, {0.05, 0.1}};
  return g;
}

namespace {

std::string lambda_name(double srpp, double bd) {
  return "lambda_" + metrics::format_number(srpp) + "_" + metrics::format_number(bd);
}

}  // namespace

TrainConfig apply_variant(TrainConfig c, const std::string& v) {
  if (v == "full") {
  } else if (v == "no_pretrain_analog") {
    c.no_pretrain_analog = true;
  } else if (v == "no_srpp") {
    c.no_srpp = true;
  } else if (v == "no_bd") {
    c.no_bd = true;
  } else if (v == "no_bd_fusion") {
    c.no_bd_fusion = true;
  } else if (v.rfind("window_", 0) == 0) {
    c.window = std::stoul(v.substr(7));
  } else {
    bool found = false;
    for (auto [s, b] : lambda_grid()) {
      if (v == lambda_name(s, b)) {
        c.lambda_srpp = s;
        c.lambda_bd = b;
        found = true;
      }
    }
    if (!found) throw ValidationError("unknown ablation variant " + v);
  }
  validate(c);
  return c;
}

std::vector<AblationRow> ablate(const TrainConfig& base, const std::vector<Case>& dataset,
                                const AblateOptions& opt,
                                const std::optional<std::filesystem::path>& out_dir) {
  if (opt.seeds == 0) throw ValidationError("ablate needs at least one seed");
  std::vector<std::string> variants =
      opt.variants.empty() ? ablation_variants() : opt.variants;
  if (opt.window_sweep) {
    for (std::size_t w : {3, 6, 12}) variants.push_back("window_" + std::to_string(w));
  }
  if (opt.lambda_grid) {
    for (auto [s, b] : lambda_grid()) variants.push_back(lambda_name(s, b));
  }

  std::vector<AblationRow> rows;
  std::vector<TrainConfig> configs;
  for (const auto& v : variants) {
    for (std::size_t k = 0; k < opt.seeds; ++k) {
      TrainConfig c = base;
      c.seed = base.seed + k;
      configs.push_back(apply_variant(c, v));
      rows.push_back({v, c.seed, {}});
    }
  }

  // Runs are independent; each owns its model, optimizer and generators.
  std::vector<std::exception_ptr> errors(rows.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < rows.size();) {
      try {
        auto result = train(configs[i], dataset);
        if (out_dir) {
          write_run(result, *out_dir / (rows[i].variant + "_seed" + std::to_string(rows[i].seed)));
        }
        rows[i].record = std::move(result.record);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::size_t threads = opt.threads ? opt.threads : std::thread::hardware_concurrency();
  threads = std::clamp<std::size_t>(threads, 1, rows.size());
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

void write_ablation_csv(std::ostream& out, const std::vector<AblationRow>& rows) {
  using metrics::format_number;
  out << "config,seed,dice,iou,hd95,nsd\n";
  for (const auto& r : rows) {
    out << r.variant << ',' << r.seed << ',' << format_number(r.record.mean_dice()) << ','
        << format_number(r.record.mean_iou()) << ',' << format_number(r.record.mean_hd95()) << ','
        << format_number(r.record.mean_nsd()) << '\n';
  }
}

void write_ablation_summary(std::ostream& out, const std::vector<AblationRow>& rows) {
  using metrics::format_number;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunRecord*>> groups;
  for (const auto& r : rows) {
    if (!groups.count(r.variant)) order.push_back(r.variant);
    groups[r.variant].push_back(&r.record);
  }
  out << "config,runs,dice_mean,dice_sd,iou_mean,iou_sd,hd95_mean,hd95_sd,nsd_mean,nsd_sd\n";
  for (const auto& v : order) {
    const auto& g = groups[v];
    out << v << ',' << g.size();
    for (auto metric : {&RunRecord::mean_dice, &RunRecord::mean_iou, &RunRecord::mean_hd95,
                        &RunRecord::mean_nsd}) {
      double mean = 0.0;
      for (const auto* r : g) mean += (r->*metric)();
      mean /= static_cast<double>(g.size());
      double var = 0.0;
      for (const auto* r : g) var += std::pow((r->*metric)() - mean, 2);
      const double sd = g.size() > 1 ? std::sqrt(var / static_cast<double>(g.size() - 1)) : 0.0;
      out << ',' << format_number(mean) << ',' << format_number(sd);
    }
    out << '\n';
  }
}

}  // namespace volseg
