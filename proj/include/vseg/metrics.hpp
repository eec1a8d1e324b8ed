#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vseg/image.hpp"

namespace vseg {

/// 2|A n B| / (|A| + |B|); 1 when both are empty.
double dice(const Mask& seg, const Mask& ref);

/// Volumetric overlap error in percent.
double voe(const Mask& seg, const Mask& ref);

/// Signed relative volume error in percent.
double delta_vol(const Mask& seg, const Mask& ref);

struct SurfaceDistances {
  double mean_mm = 0.0;
  double max_mm = 0.0;
  double rms_mm = 0.0;
};

/// Foreground voxels with a background (or out-of-volume) 6-neighbour.
std::vector<Extent3> border_voxels(const Mask& m);

/// Symmetric surface distances between border voxel centres, in mm.
SurfaceDistances surface_distances(const Mask& seg, const Mask& ref, const Vec3& spacing_mm);
inline SurfaceDistances surface_distances(const Mask& seg, const Mask& ref) {
  return surface_distances(seg, ref, ref.spacing_mm);
}

/// Squared Euclidean distance (mm^2) from every voxel to the nearest site.
std::vector<double> squared_distance_transform(const std::vector<std::uint8_t>& sites, const Extent3& shape,
                                               const Vec3& spacing_mm);

struct MetricsReport {
  double voe_pct = 0.0;
  double delta_vol_pct = 0.0;
  double d_mean_mm = 0.0;
  double d_max_mm = 0.0;
  double d_rms_mm = 0.0;
  double miccai = 0.0;
  double runtime_s = 0.0;
};

/// Reference errors of an untrained human observer: VOE, |dvol|, d_mean,
/// d_rms, d_max.
inline constexpr std::array<double, 5> miccai_reference{6.4, 4.7, 1.0, 1.8, 19.0};

/// Subscores max(0, 100 - 25 e / e_ref) in the order of miccai_reference.
std::array<double, 5> miccai_subscores(const MetricsReport& r);
/// Mean of the five subscores.
double miccai_score(const MetricsReport& r);

struct WilcoxonResult {
  double p_value = 1.0;
  double w_plus = 0.0;  // sum of mid-ranks of positive differences
  std::int64_t n = 0;   // non-zero differences
  bool exact = false;
};

/// Two-sided paired signed-rank test. Zero differences are dropped, tied
/// magnitudes get mid-ranks; exact null distribution for n <= 20, normal
/// approximation with tie and continuity correction above.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& x, const std::vector<double>& y);

MetricsReport evaluate_case(const Mask& seg, const Mask& ref, double runtime_s);

struct CaseRow {
  std::string case_id;
  MetricsReport report;
};

/// Per-column median (mean of the two middle values for even counts).
MetricsReport median_report(const std::vector<CaseRow>& rows);

struct EvaluationInput {
  std::string case_id;
  Mask seg;
  Mask ref;
  double runtime_s = 0.0;
};

std::vector<CaseRow> evaluate_batch(const std::vector<EvaluationInput>& cases);

/// case_id,voe_pct,delta_vol_pct,d_mean_mm,d_max_mm,d_rms_mm,miccai,runtime_s
/// rows followed by a "median" row.
std::string metrics_csv(const std::vector<CaseRow>& rows);
void write_metrics_csv(const std::vector<CaseRow>& rows, const std::filesystem::path& path);
/// Reads per-case rows back; the median row is skipped.
std::vector<CaseRow> read_metrics_csv(const std::filesystem::path& path);

}  // namespace vseg
