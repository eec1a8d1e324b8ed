#include "vseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

namespace vseg {

namespace {

struct Counts {
  std::int64_t seg = 0, ref = 0, inter = 0;
};

Counts count(const Mask& seg, const Mask& ref, const char* what) {
  require_same_geometry(seg, ref, what);
  Counts c;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    c.seg += seg.data[i] != 0;
    c.ref += ref.data[i] != 0;
    c.inter += seg.data[i] != 0 && ref.data[i] != 0;
  }
  return c;
}

}  // namespace

double dice(const Mask& seg, const Mask& ref) {
  const Counts c = count(seg, ref, "dice");
  if (c.seg + c.ref == 0) return 1.0;
  return 2.0 * static_cast<double>(c.inter) / static_cast<double>(c.seg + c.ref);
}

double voe(const Mask& seg, const Mask& ref) {
  const Counts c = count(seg, ref, "voe");
  const std::int64_t uni = c.seg + c.ref - c.inter;
  if (uni == 0) throw ValidationError("voe: both masks are empty");
  return 100.0 * (1.0 - static_cast<double>(c.inter) / static_cast<double>(uni));
}

double delta_vol(const Mask& seg, const Mask& ref) {
  const Counts c = count(seg, ref, "delta_vol");
  if (c.ref == 0) throw ValidationError("delta_vol: empty reference");
  return 100.0 * static_cast<double>(c.seg - c.ref) / static_cast<double>(c.ref);
}

std::vector<Extent3> border_voxels(const Mask& m) {
  m.validate();
  const auto [nz, ny, nx] = m.shape;
  auto fg = [&](std::int64_t z, std::int64_t y, std::int64_t x) {
    return z >= 0 && y >= 0 && x >= 0 && z < nz && y < ny && x < nx && m.at(z, y, x) != 0;
  };
  std::vector<Extent3> out;
  for (std::int64_t z = 0; z < nz; ++z) {
    for (std::int64_t y = 0; y < ny; ++y) {
      for (std::int64_t x = 0; x < nx; ++x) {
        if (!fg(z, y, x)) continue;
        if (!fg(z - 1, y, x) || !fg(z + 1, y, x) || !fg(z, y - 1, x) || !fg(z, y + 1, x) || !fg(z, y, x - 1) ||
            !fg(z, y, x + 1)) {
          out.push_back({z, y, x});
        }
      }
    }
  }
  return out;
}

namespace {

// Lower envelope of parabolas (Felzenszwalb & Huttenlocher) along one line
// with sample positions q * h.
void edt_1d(const double* f, std::int64_t n, double h, double* d, std::vector<std::int64_t>& v,
            std::vector<double>& z) {
  const double inf = std::numeric_limits<double>::infinity();
  v.resize(static_cast<std::size_t>(n));
  z.resize(static_cast<std::size_t>(n + 1));
  std::int64_t k = -1;
  for (std::int64_t q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    const double pq = static_cast<double>(q) * h;
    while (k >= 0) {
      const std::int64_t p = v[static_cast<std::size_t>(k)];
      const double pp = static_cast<double>(p) * h;
      const double s = ((f[q] + pq * pq) - (f[p] + pp * pp)) / (2.0 * (pq - pp));
      if (s > z[static_cast<std::size_t>(k)]) break;
      --k;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    if (k == 0) {
      z[0] = -inf;
    } else {
      const std::int64_t p = v[static_cast<std::size_t>(k - 1)];
      const double pp = static_cast<double>(p) * h;
      z[static_cast<std::size_t>(k)] = ((f[q] + pq * pq) - (f[p] + pp * pp)) / (2.0 * (pq - pp));
    }
    z[static_cast<std::size_t>(k + 1)] = inf;
  }
  if (k < 0) {
    for (std::int64_t q = 0; q < n; ++q) d[q] = inf;
    return;
  }
  std::int64_t j = 0;
  for (std::int64_t q = 0; q < n; ++q) {
    const double x = static_cast<double>(q) * h;
    while (z[static_cast<std::size_t>(j + 1)] < x) ++j;
    const std::int64_t p = v[static_cast<std::size_t>(j)];
    const double dx = static_cast<double>(q - p) * h;
    d[q] = dx * dx + f[p];
  }
}

}  // namespace

std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& sites, const Extent3& shape,
                                               const Vec3& spacing_mm) {
  const double inf = std::numeric_limits<double>::infinity();
  const std::int64_t n = voxel_count(shape);
  if (static_cast<std::int64_t>(sites.size()) != n) throw ValidationError("distance transform: size mismatch");
  std::vector<double> g(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) g[static_cast<std::size_t>(i)] = sites[static_cast<std::size_t>(i)] ? 0.0 : inf;
  const std::int64_t stride[3] = {shape[1] * shape[2], shape[2], 1};
  std::vector<double> line, out;
  std::vector<std::int64_t> v;
  std::vector<double> z;
  // x first, then y, then z.
  for (int axis = 2; axis >= 0; --axis) {
    const std::int64_t len = shape[static_cast<std::size_t>(axis)];
    const std::int64_t st = stride[axis];
    line.resize(static_cast<std::size_t>(len));
    out.resize(static_cast<std::size_t>(len));
    for (std::int64_t base = 0; base < n; ++base) {
      // A line starts at every voxel whose coordinate along `axis` is zero.
      if ((base / st) % len != 0) continue;
      for (std::int64_t q = 0; q < len; ++q) line[static_cast<std::size_t>(q)] = g[static_cast<std::size_t>(base + q * st)];
      edt_1d(line.data(), len, spacing_mm[static_cast<std::size_t>(axis)], out.data(), v, z);
      for (std::int64_t q = 0; q < len; ++q) g[static_cast<std::size_t>(base + q * st)] = out[static_cast<std::size_t>(q)];
    }
  }
  return g;
}

SurfaceDistances surface_distances(const Mask& seg, const Mask& ref, const Vec3& spacing_mm) {
  if (seg.shape != ref.shape) throw ValidationError("surface_distances: geometry mismatch");
  for (double s : spacing_mm) {
    if (!(s > 0.0)) throw ValidationError("surface_distances: spacing must be positive");
  }
  const auto bs = border_voxels(seg);
  const auto br = border_voxels(ref);
  if (bs.empty() || br.empty()) throw ValidationError("surface_distances: empty mask");
  auto site_map = [&](const std::vector<Extent3>& b) {
    std::vector<std::uint8_t> s(seg.size(), 0);
    for (const auto& p : b) s[seg.index(p[0], p[1], p[2])] = 1;
    return s;
  };
  const auto dt_ref = squared_distance_transform(site_map(br), ref.shape, spacing_mm);
  const auto dt_seg = squared_distance_transform(site_map(bs), seg.shape, spacing_mm);
  double sum = 0.0, sum_sq = 0.0, mx = 0.0;
  for (const auto& p : bs) {
    const double d2 = dt_ref[seg.index(p[0], p[1], p[2])];
    sum += std::sqrt(d2);
    sum_sq += d2;
    mx = std::max(mx, std::sqrt(d2));
  }
  for (const auto& p : br) {
    const double d2 = dt_seg[seg.index(p[0], p[1], p[2])];
    sum += std::sqrt(d2);
    sum_sq += d2;
    mx = std::max(mx, std::sqrt(d2));
  }
  const double n = static_cast<double>(bs.size() + br.size());
  return {sum / n, mx, std::sqrt(sum_sq / n)};
}

std::array<double, 5> miccai_subscores(const MetricsReport& r) {
  const double e[5] = {r.voe_pct, std::abs(r.delta_vol_pct), r.d_mean_mm, r.d_rms_mm, r.d_max_mm};
  std::array<double, 5> s{};
  for (std::size_t i = 0; i < 5; ++i) s[i] = std::max(0.0, 100.0 - 25.0 * e[i] / miccai_reference[i]);
  return s;
}

double miccai_score(const MetricsReport& r) {
  const auto s = miccai_subscores(r);
  return (s[0] + s[1] + s[2] + s[3] + s[4]) / 5.0;
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ValidationError("wilcoxon: samples differ in length");
  if (x.empty()) throw ValidationError("wilcoxon: empty sample");
  std::vector<double> d;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x[i] - y[i];
    if (!std::isfinite(v)) throw ValidationError("wilcoxon: non-finite difference");
    if (v != 0.0) d.push_back(v);
  }
  if (d.empty()) throw ValidationError("wilcoxon: all differences zero");
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::abs(d[a]) < std::abs(d[b]); });
  // Doubled mid-ranks are integers.
  std::vector<std::int64_t> rank2(n);
  double tie_term = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const auto r2 = static_cast<std::int64_t>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = r2;
    const double t = static_cast<double>(j - i + 1);
    tie_term += t * t * t - t;
    i = j + 1;
  }
  std::int64_t w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 0) w2 += rank2[i];
  }
  WilcoxonResult res;
  res.n = static_cast<std::int64_t>(n);
  res.w_plus = static_cast<double>(w2) / 2.0;
  if (n <= 20) {
    res.exact = true;
    std::int64_t total = 0;
    for (auto r : rank2) total += r;
    // Number of sign assignments reaching each doubled positive-rank sum.
    std::vector<double> ways(static_cast<std::size_t>(total + 1), 0.0);
    ways[0] = 1.0;
    for (auto r : rank2) {
      for (std::int64_t s = total; s >= r; --s) ways[static_cast<std::size_t>(s)] += ways[static_cast<std::size_t>(s - r)];
    }
    const double all = std::ldexp(1.0, static_cast<int>(n));
    double lo = 0.0, hi = 0.0;
    for (std::int64_t s = 0; s <= total; ++s) {
      if (s <= w2) lo += ways[static_cast<std::size_t>(s)];
      if (s >= w2) hi += ways[static_cast<std::size_t>(s)];
    }
    res.p_value = std::min(1.0, 2.0 * std::min(lo, hi) / all);
    return res;
  }
  const double nn = static_cast<double>(n);
  const double mean = nn * (nn + 1.0) / 4.0;
  const double var = nn * (nn + 1.0) * (2.0 * nn + 1.0) / 24.0 - tie_term / 48.0;
  if (var <= 0.0) {
    res.p_value = 1.0;
    return res;
  }
  const double z = std::max(0.0, std::abs(res.w_plus - mean) - 0.5) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return res;
}

MetricsReport evaluate_case(const Mask& seg, const Mask& ref, double runtime_s) {
  require_same_geometry(seg, ref, "evaluate_case");
  MetricsReport r;
  r.voe_pct = voe(seg, ref);
  r.delta_vol_pct = delta_vol(seg, ref);
  const SurfaceDistances s = surface_distances(seg, ref, ref.spacing_mm);
  r.d_mean_mm = s.mean_mm;
  r.d_max_mm = s.max_mm;
  r.d_rms_mm = s.rms_mm;
  r.miccai = miccai_score(r);
  r.runtime_s = runtime_s;
  return r;
}

std::vector<CaseRow> evaluate_batch(const std::vector<EvaluationInput>& cases) {
  std::vector<CaseRow> rows;
  for (const auto& c : cases) rows.push_back({c.case_id, evaluate_case(c.seg, c.ref, c.runtime_s)});
  return rows;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

}  // namespace

MetricsReport median_report(const std::vector<CaseRow>& rows) {
  if (rows.empty()) throw ValidationError("median of no cases");
  auto col = [&](double MetricsReport::*f) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.report.*f);
    return median_of(std::move(v));
  };
  MetricsReport m;
  m.voe_pct = col(&MetricsReport::voe_pct);
  m.delta_vol_pct = col(&MetricsReport::delta_vol_pct);
  m.d_mean_mm = col(&MetricsReport::d_mean_mm);
  m.d_max_mm = col(&MetricsReport::d_max_mm);
  m.d_rms_mm = col(&MetricsReport::d_rms_mm);
  m.miccai = col(&MetricsReport::miccai);
  m.runtime_s = col(&MetricsReport::runtime_s);
  return m;
}

std::string metrics_csv(const std::vector<CaseRow>& rows) {
  std::ostringstream os;
  os << "case_id,voe_pct,delta_vol_pct,d_mean_mm,d_max_mm,d_rms_mm,miccai,runtime_s\n";
  os << std::fixed << std::setprecision(6);
  auto line = [&](const std::string& id, const MetricsReport& r) {
    os << id << ',' << r.voe_pct << ',' << r.delta_vol_pct << ',' << r.d_mean_mm << ',' << r.d_max_mm << ','
       << r.d_rms_mm << ',' << r.miccai << ',' << r.runtime_s << '\n';
  };
  for (const auto& r : rows) line(r.case_id, r.report);
  if (!rows.empty()) line("median", median_report(rows));
  return os.str();
}

void write_metrics_csv(const std::vector<CaseRow>& rows, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  f << metrics_csv(rows);
  if (!f) throw IoError("failed writing '" + path.string() + "'");
}

std::vector<CaseRow> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open metrics CSV '" + path.string() + "'");
  std::string header;
  if (!std::getline(f, header)) throw IoError("empty metrics CSV '" + path.string() + "'");
  std::vector<CaseRow> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != 8) throw IoError("malformed metrics row: " + line);
    if (cells[0] == "median") continue;
    CaseRow r;
    r.case_id = cells[0];
    try {
      r.report.voe_pct = std::stod(cells[1]);
      r.report.delta_vol_pct = std::stod(cells[2]);
      r.report.d_mean_mm = std::stod(cells[3]);
      r.report.d_max_mm = std::stod(cells[4]);
      r.report.d_rms_mm = std::stod(cells[5]);
      r.report.miccai = std::stod(cells[6]);
      r.report.runtime_s = std::stod(cells[7]);
    } catch (const std::exception&) {
      throw IoError("malformed number in metrics row: " + line);
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace vseg
