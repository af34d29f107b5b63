#include "volseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "volseg/errors.hpp"

namespace volseg::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_pair(const LabelMask& p, const LabelMask& g, std::size_t k) {
  if (p.shape() != g.shape() || p.classes() != g.classes()) {
    throw ValidationError("metrics: prediction and ground truth differ in shape");
  }
  if (k >= p.classes()) throw ValidationError("metrics: class index out of range");
}

struct Overlap {
  std::size_t p = 0, g = 0, both = 0;
};

Overlap overlap(const LabelMask& p, const LabelMask& g, std::size_t k) {
  check_pair(p, g, k);
  Overlap o;
  auto pb = p.class_bits(k);
  auto gb = g.class_bits(k);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    o.p += pb[i];
    o.g += gb[i];
    o.both += pb[i] & gb[i];
  }
  return o;
}

// Squared distance transform of one line in place (Felzenszwalb-Huttenlocher
// lower envelope), sample positions i * step.
void edt_line(std::vector<double>& f, double step, std::vector<std::size_t>& v,
              std::vector<double>& zb, std::vector<double>& out) {
  const std::size_t n = f.size();
  std::size_t k = 0;
  bool any = false;
  auto pos = [step](std::size_t i) { return static_cast<double>(i) * step; };
  for (std::size_t q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    if (!any) {
      v[0] = q;
      zb[0] = -kInf;
      zb[1] = kInf;
      k = 0;
      any = true;
      continue;
    }
    double s;
    while (true) {
      const std::size_t p = v[k];
      s = ((f[q] + pos(q) * pos(q)) - (f[p] + pos(p) * pos(p))) / (2.0 * (pos(q) - pos(p)));
      if (s <= zb[k] && k > 0) {
        --k;
      } else {
        break;
      }
    }
    if (s <= zb[k]) {  // k == 0 and the new parabola dominates everywhere
      v[0] = q;
      zb[0] = -kInf;
      zb[1] = kInf;
      continue;
    }
    ++k;
    v[k] = q;
    zb[k] = s;
    zb[k + 1] = kInf;
  }
  if (!any) return;  // line stays +inf
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (zb[k + 1] < pos(q)) ++k;
    const double d = pos(q) - pos(v[k]);
    out[q] = d * d + f[v[k]];
  }
  std::copy(out.begin(), out.end(), f.begin());
}

}  // namespace

SurfacePointSet extract_surface(const LabelMask& mask, std::size_t k) {
  if (k >= mask.classes()) throw ValidationError("surface: class index out of range");
  const GridShape& s = mask.shape();
  SurfacePointSet out;
  out.spacing = mask.spacing();
  auto bits = mask.class_bits(k);
  for (std::size_t d = 0; d < s.depth; ++d)
    for (std::size_t y = 0; y < s.height; ++y)
      for (std::size_t x = 0; x < s.width; ++x)
        if (is_surface_voxel(bits, s, d, y, x)) out.points.push_back({d, y, x});
  return out;
}

double voxel_distance(const Voxel& a, const Voxel& b, const Spacing& sp) {
  const double dz = (static_cast<double>(a.z) - static_cast<double>(b.z)) * sp[0];
  const double dy = (static_cast<double>(a.y) - static_cast<double>(b.y)) * sp[1];
  const double dx = (static_cast<double>(a.x) - static_cast<double>(b.x)) * sp[2];
  return std::sqrt(dz * dz + dy * dy + dx * dx);
}

std::vector<double> distance_field(const SurfacePointSet& surface, const GridShape& s) {
  std::vector<double> f(s.voxels(), kInf);
  for (const auto& p : surface.points) {
    if (p.z >= s.depth || p.y >= s.height || p.x >= s.width) {
      throw ValidationError("surface point outside the grid");
    }
    f[(p.z * s.height + p.y) * s.width + p.x] = 0.0;
  }
  if (surface.points.empty()) return f;

  const std::size_t longest = std::max({s.depth, s.height, s.width});
  std::vector<double> line, out(longest);
  std::vector<std::size_t> v(longest);
  std::vector<double> zb(longest + 1);
  auto pass = [&](std::size_t count, std::size_t stride, double step, auto base_of,
                  std::size_t lines) {
    line.resize(count);
    out.resize(count);
    for (std::size_t l = 0; l < lines; ++l) {
      const std::size_t base = base_of(l);
      for (std::size_t i = 0; i < count; ++i) line[i] = f[base + i * stride];
      edt_line(line, step, v, zb, out);
      for (std::size_t i = 0; i < count; ++i) f[base + i * stride] = line[i];
    }
  };
  const std::size_t h = s.height, w = s.width, d = s.depth;
  pass(w, 1, surface.spacing[2], [&](std::size_t l) { return l * w; }, d * h);
  pass(h, w, surface.spacing[1],
       [&](std::size_t l) { return (l / w) * h * w + (l % w); }, d * w);
  pass(d, h * w, surface.spacing[0], [&](std::size_t l) { return l; }, h * w);
  for (double& x : f) x = std::sqrt(x);
  return f;
}

std::vector<double> directed_distances(const SurfacePointSet& from, const SurfacePointSet& to,
                                       const GridShape& s) {
  std::vector<double> out;
  out.reserve(from.points.size());
  if (from.points.empty()) return out;
  const auto field = distance_field(to, s);
  for (const auto& p : from.points) out.push_back(field[(p.z * s.height + p.y) * s.width + p.x]);
  return out;
}

double percentile_nearest_rank(std::vector<double> values, unsigned percent) {
  if (values.empty()) throw ValidationError("percentile of an empty set");
  if (percent == 0 || percent > 100) throw ValidationError("percentile must be in (0, 100]");
  const std::size_t n = values.size();
  std::size_t rank = (static_cast<std::size_t>(percent) * n + 99) / 100;  // ceil
  rank = std::clamp<std::size_t>(rank, 1, n);
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                   values.end());
  return values[rank - 1];
}

double dice(const LabelMask& p, const LabelMask& g, std::size_t k) {
  const auto o = overlap(p, g, k);
  if (o.p + o.g == 0) return 1.0;
  return 2.0 * static_cast<double>(o.both) / static_cast<double>(o.p + o.g);
}

double iou(const LabelMask& p, const LabelMask& g, std::size_t k) {
  const auto o = overlap(p, g, k);
  const std::size_t uni = o.p + o.g - o.both;
  if (uni == 0) return 1.0;
  return static_cast<double>(o.both) / static_cast<double>(uni);
}

double hd95_sentinel(const GridShape& s, const Spacing& sp) {
  const double a = static_cast<double>(s.depth) * sp[0];
  const double b = static_cast<double>(s.height) * sp[1];
  const double c = static_cast<double>(s.width) * sp[2];
  return std::sqrt(a * a + b * b + c * c);
}

double hd95(const LabelMask& p, const LabelMask& g, std::size_t k) {
  check_pair(p, g, k);
  const auto sp = extract_surface(p, k);
  const auto sg = extract_surface(g, k);
  if (sp.points.empty() && sg.points.empty()) return 0.0;
  if (sp.points.empty() || sg.points.empty()) return hd95_sentinel(g.shape(), g.spacing());
  const auto& shape = g.shape();
  return std::max(percentile_nearest_rank(directed_distances(sp, sg, shape), 95),
                  percentile_nearest_rank(directed_distances(sg, sp, shape), 95));
}

double nsd(const LabelMask& p, const LabelMask& g, std::size_t k, double tau) {
  if (!(tau > 0.0)) throw ValidationError("NSD tolerance must be positive");
  check_pair(p, g, k);
  const auto sp = extract_surface(p, k);
  const auto sg = extract_surface(g, k);
  if (sp.points.empty() && sg.points.empty()) return 1.0;
  if (sp.points.empty() || sg.points.empty()) return 0.0;
  const auto& shape = g.shape();
  std::size_t within = 0;
  for (double d : directed_distances(sp, sg, shape)) within += d <= tau;
  for (double d : directed_distances(sg, sp, shape)) within += d <= tau;
  return static_cast<double>(within) / static_cast<double>(sp.points.size() + sg.points.size());
}

MetricsReport evaluate(const LabelMask& pred, const LabelMask& gt, double tau) {
  if (!(tau > 0.0)) throw ValidationError("NSD tolerance must be positive");
  check_pair(pred, gt, 0);
  MetricsReport r;
  for (std::size_t k = 0; k < gt.classes(); ++k) {
    ClassMetrics m;
    m.class_index = k;
    m.tau = tau;
    m.dice = dice(pred, gt, k);
    m.iou = iou(pred, gt, k);
    m.hd95 = hd95(pred, gt, k);
    m.nsd = nsd(pred, gt, k, tau);
    if (tau == kDefaultTau) m.flags.emplace_back("tau_default");
    const bool p_empty = pred.count(k) == 0;
    const bool g_empty = gt.count(k) == 0;
    if (p_empty && g_empty) {
      m.flags.emplace_back("both_empty");
    } else if (p_empty || g_empty) {
      m.flags.emplace_back(p_empty ? "pred_empty" : "gt_empty");
      m.flags.emplace_back("hd95_sentinel");
    }
    r.classes.push_back(std::move(m));
  }
  return r;
}

namespace {
template <class F>
double mean_of(const std::vector<ClassMetrics>& v, F f) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const auto& m : v) s += f(m);
  return s / static_cast<double>(v.size());
}
}  // namespace

double MetricsReport::mean_dice() const { return mean_of(classes, [](auto& m) { return m.dice; }); }
double MetricsReport::mean_iou() const { return mean_of(classes, [](auto& m) { return m.iou; }); }
double MetricsReport::mean_hd95() const { return mean_of(classes, [](auto& m) { return m.hd95; }); }
double MetricsReport::mean_nsd() const { return mean_of(classes, [](auto& m) { return m.nsd; }); }

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_csv(std::ostream& out, const std::vector<CaseReport>& cases) {
  out << kCsvHeader << '\n';
  for (const auto& c : cases) {
    for (const auto& m : c.report.classes) {
      std::string flags;
      for (const auto& f : m.flags) flags += (flags.empty() ? "" : "|") + f;
      out << c.case_name << ',' << m.class_index << ',' << format_number(m.dice) << ','
          << format_number(m.iou) << ',' << format_number(m.hd95) << ',' << format_number(m.nsd)
          << ',' << format_number(m.tau) << ',' << flags << '\n';
    }
  }
}

}  // namespace volseg::metrics
