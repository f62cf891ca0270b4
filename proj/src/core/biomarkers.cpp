#include "atn/biomarkers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "atn/dataset.hpp"
#include "atn/errors.hpp"

namespace atn::biomarkers {

using patches3d::SegmentSeries;

double mean_diameter(const SegmentSeries& s) {
  if (s.diameter_mm.empty())
    throw DataError("segment " + std::to_string(s.segment_id) + " has no diameters");
  return std::accumulate(s.diameter_mm.begin(), s.diameter_mm.end(), 0.0) /
         static_cast<double>(s.diameter_mm.size());
}

double intertapering(const SegmentSeries& series, const SegmentSeries& parent) {
  const double dp = mean_diameter(parent);
  if (!(dp > 0.0))
    throw DataError("parent segment " + std::to_string(parent.segment_id) +
                    " has non-positive mean diameter");
  return (dp - mean_diameter(series)) / dp;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("line fit inputs differ in length");
  if (x.size() < 2) throw DataError("line fit needs at least 2 points");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw DataError("line fit abscissae are all equal");
  LineFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  return fit;
}

double intratapering(const SegmentSeries& s) {
  if (s.diameter_mm.size() < 3)
    throw DataError("segment " + std::to_string(s.segment_id) +
                    ": intratapering needs at least 3 positions");
  const LineFit fit = fit_line(s.arclength_mm, s.diameter_mm);
  if (fit.intercept == 0.0)
    throw NumericalError("segment " + std::to_string(s.segment_id) +
                         ": zero intercept makes intratapering singular");
  return -fit.slope / fit.intercept;
}

double segment_volume(const SegmentSeries& s, double interval_mm) {
  if (s.area_mm2.empty())
    throw DataError("segment " + std::to_string(s.segment_id) + " has no area measurements");
  return std::accumulate(s.area_mm2.begin(), s.area_mm2.end(), 0.0) * interval_mm;
}

std::string to_string(Aggregation a) { return a == Aggregation::Mean ? "mean" : "median"; }

double aggregate(std::span<const double> values, Aggregation mode) {
  if (values.empty()) throw DataError("cannot aggregate an empty set of segment values");
  if (mode == Aggregation::Mean)
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<SegmentBiomarkers> compute_segments(const std::vector<SegmentSeries>& series) {
  std::map<int, const SegmentSeries*> by_id;
  for (const auto& s : series) by_id[s.segment_id] = &s;
  std::vector<SegmentBiomarkers> out;
  for (const auto& s : series) {
    if (!patches3d::eligible_for_biomarkers(s.generation)) continue;
    SegmentBiomarkers b;
    b.segment_id = s.segment_id;
    b.mean_diameter_mm = mean_diameter(s);
    b.volume_mm3 = segment_volume(s);
    if (s.diameter_mm.size() >= 3) {
      const LineFit fit = fit_line(s.arclength_mm, s.diameter_mm);
      if (fit.intercept != 0.0) b.intratapering = -fit.slope / fit.intercept;
    }
    if (s.parent_id) {
      const auto it = by_id.find(*s.parent_id);
      if (it != by_id.end()) {
        b.parent_mean_diameter_mm = mean_diameter(*it->second);
        b.intertapering = intertapering(s, *it->second);
      }
    }
    out.push_back(b);
  }
  return out;
}

std::vector<PatientBiomarker> aggregate_patient(const std::string& patient_id,
                                                const std::string& method,
                                                const std::vector<SegmentBiomarkers>& segments) {
  std::vector<double> volume, inter, intra;
  for (const auto& s : segments) {
    volume.push_back(s.volume_mm3);
    if (s.intertapering) inter.push_back(*s.intertapering);
    if (s.intratapering) intra.push_back(*s.intratapering);
  }
  std::vector<PatientBiomarker> out;
  const std::pair<const char*, const std::vector<double>*> sets[] = {
      {"volume", &volume}, {"intertapering", &inter}, {"intratapering", &intra}};
  for (const auto& [name, values] : sets) {
    if (values->empty()) continue;
    for (Aggregation mode : {Aggregation::Mean, Aggregation::Median}) {
      PatientBiomarker b;
      b.patient_id = patient_id;
      b.biomarker = name;
      b.method = method;
      b.aggregation = mode;
      b.value = aggregate(*values, mode);
      b.n_segments = static_cast<int>(values->size());
      out.push_back(b);
    }
  }
  return out;
}

void write_patient_csv(const std::filesystem::path& csv, const std::vector<PatientBiomarker>& rows) {
  io::CsvTable t;
  t.header = {"patient_id", "biomarker", "method", "aggregation", "value", "n_segments"};
  for (const auto& r : rows) {
    t.rows.push_back({r.patient_id, r.biomarker, r.method, to_string(r.aggregation),
                      io::format_double(r.value), std::to_string(r.n_segments)});
  }
  io::write_csv(csv, t);
}

std::vector<PatientBiomarker> read_patient_csv(const std::filesystem::path& csv) {
  const io::CsvTable t = io::read_csv(csv);
  const std::size_t c_p = t.column("patient_id"), c_b = t.column("biomarker"),
                    c_m = t.column("method"), c_a = t.column("aggregation"),
                    c_v = t.column("value"), c_n = t.column("n_segments");
  std::vector<PatientBiomarker> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = csv.string() + " row " + std::to_string(r + 1);
    PatientBiomarker b;
    b.patient_id = row[c_p];
    b.biomarker = row[c_b];
    b.method = row[c_m];
    if (row[c_a] == "mean") {
      b.aggregation = Aggregation::Mean;
    } else if (row[c_a] == "median") {
      b.aggregation = Aggregation::Median;
    } else {
      throw DataError(ctx + ": unknown aggregation '" + row[c_a] + "'");
    }
    b.value = io::parse_double(row[c_v], ctx);
    b.n_segments = static_cast<int>(io::parse_int(row[c_n], ctx));
    out.push_back(b);
  }
  return out;
}

}  // namespace atn::biomarkers
