#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "atn/image.hpp"
#include "atn/label.hpp"

namespace atn::patches3d {

using Vec3 = std::array<double, 3>;

struct Volume3D {
  int nx = 0, ny = 0, nz = 0;
  Vec3 spacing{1.0, 1.0, 1.0};  // mm per voxel along x, y, z
  Vec3 origin{0.0, 0.0, 0.0};   // physical position of voxel (0, 0, 0)
  std::vector<float> data;      // index (z * ny + y) * nx + x

  float at(int x, int y, int z) const {
    return data[(static_cast<std::size_t>(z) * ny + y) * nx + x];
  }
  float& at(int x, int y, int z) { return data[(static_cast<std::size_t>(z) * ny + y) * nx + x]; }

  /// Inside the hull of voxel centres.
  bool contains(const Vec3& p) const;

  /// Trilinear interpolation; `fill` outside the hull of voxel centres.
  double sample(const Vec3& p, double fill) const;
};

/// Volume files reuse the dataset bundle layout with count = 1 and extra
/// manifest keys `depth`, `slice_spacing_mm` and `origin_mm`.
void write_volume(const std::filesystem::path& dir, const Volume3D& volume);
Volume3D read_volume(const std::filesystem::path& dir);

struct CenterlineSegment {
  int segment_id = 0;
  std::optional<int> parent_id;
  int generation = 0;
  std::vector<Vec3> points;    // mm, proximal to distal
  std::vector<Vec3> tangents;  // unit length

  double length() const;
};

/// Checks unit tangents and point spacing <= 1 mm; throws DataError.
void validate(const CenterlineSegment& segment);

std::vector<CenterlineSegment> read_centerlines(const std::filesystem::path& csv);
void write_centerlines(const std::filesystem::path& csv,
                       const std::vector<CenterlineSegment>& segments);

struct PlaneBasis {
  Vec3 u;  // patch x (column) direction
  Vec3 v;  // patch y (row) direction
};

/// Deterministic in-plane basis: tangent crossed with the coordinate axis
/// least aligned with it (ties resolved x, y, z), then orthonormalised.
/// `rotation` turns the basis by that angle about the tangent.
PlaneBasis plane_basis(const Vec3& tangent, double rotation = 0.0);

inline constexpr double kOutsideHu = -1000.0;

/// Orthogonal plane through `point` sampled by trilinear interpolation.
Image extract_patch(const Volume3D& volume, const Vec3& point, const Vec3& tangent,
                    int size_px = 80, double spacing_mm = 0.5, double rotation = 0.0);

enum class DiameterMode { EquivalentArea, MeanOfAxes };

struct SeriesConfig {
  double prune_mm = 1.0;
  double step_mm = 0.5;
  double max_missing_fraction = 0.3;
  DiameterMode diameter = DiameterMode::EquivalentArea;
};

struct SamplePoint {
  double arclength = 0.0;
  Vec3 point{};
  Vec3 tangent{};
};

/// Sample positions after pruning both ends; empty when the segment is too
/// short.
std::vector<SamplePoint> sample_positions(const CenterlineSegment& segment,
                                          const SeriesConfig& config);

struct SegmentSeries {
  int segment_id = 0;
  std::optional<int> parent_id;
  int generation = 0;
  std::vector<double> arclength_mm;
  std::vector<double> diameter_mm;
  std::vector<double> area_mm2;
  std::string method;
  int n_missing = 0;  // positions filled by interpolation
};

struct SeriesOutcome {
  std::optional<SegmentSeries> series;
  std::string exclusion_reason;  // set when `series` is empty
};

double lumen_diameter(const AirwayLabel& label, DiameterMode mode);

/// Combine per-position measurements (nullopt = failed) into a series.
SeriesOutcome assemble_series(const CenterlineSegment& segment,
                              const std::vector<SamplePoint>& positions,
                              const std::vector<std::optional<AirwayLabel>>& measurements,
                              const std::string& method, const SeriesConfig& config);

using MeasureFn = std::function<std::optional<AirwayLabel>(const SamplePoint&)>;

SeriesOutcome build_segment_series(const CenterlineSegment& segment, const MeasureFn& measure,
                                   const std::string& method, const SeriesConfig& config);

/// Trachea (generation 0) and first generation bronchi are not biomarker input.
bool eligible_for_biomarkers(int generation);

void write_series_csv(const std::filesystem::path& csv, const std::vector<SegmentSeries>& series);
std::vector<SegmentSeries> read_series_csv(const std::filesystem::path& csv);

}  // namespace atn::patches3d
