#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "atn/patches3d.hpp"

namespace atn::biomarkers {

/// Relative drop in mean diameter from the parent segment:
/// (parent_mean - mean) / parent_mean.
double intertapering(const patches3d::SegmentSeries& series,
                     const patches3d::SegmentSeries& parent);

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least squares d = slope * x + intercept.
LineFit fit_line(std::span<const double> x, std::span<const double> y);

/// -slope / intercept of the diameter-vs-arclength line. Needs >= 3 points.
double intratapering(const patches3d::SegmentSeries& series);

/// Sum of cross-sectional areas times the sampling interval (mm^3).
double segment_volume(const patches3d::SegmentSeries& series, double interval_mm = 0.5);

double mean_diameter(const patches3d::SegmentSeries& series);

enum class Aggregation { Mean, Median };
std::string to_string(Aggregation a);
double aggregate(std::span<const double> values, Aggregation mode);

struct SegmentBiomarkers {
  int segment_id = 0;
  std::optional<double> intertapering;
  std::optional<double> intratapering;
  double volume_mm3 = 0.0;
  double mean_diameter_mm = 0.0;
  std::optional<double> parent_mean_diameter_mm;
};

/// Biomarkers for every eligible segment (generation >= 2). Parents may be
/// ineligible segments; they are still used for intertapering.
std::vector<SegmentBiomarkers> compute_segments(
    const std::vector<patches3d::SegmentSeries>& series);

struct PatientBiomarker {
  std::string patient_id;
  std::string biomarker;  // volume | intertapering | intratapering
  std::string method;
  Aggregation aggregation = Aggregation::Mean;
  double value = 0.0;
  int n_segments = 0;
};

/// Patient-level values for all three biomarkers under both aggregations.
std::vector<PatientBiomarker> aggregate_patient(const std::string& patient_id,
                                                const std::string& method,
                                                const std::vector<SegmentBiomarkers>& segments);

void write_patient_csv(const std::filesystem::path& csv, const std::vector<PatientBiomarker>& rows);
std::vector<PatientBiomarker> read_patient_csv(const std::filesystem::path& csv);

}  // namespace atn::biomarkers
