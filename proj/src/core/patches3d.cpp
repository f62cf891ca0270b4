#include "atn/patches3d.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "atn/dataset.hpp"
#include "atn/errors.hpp"

namespace atn::patches3d {

namespace fs = std::filesystem;

namespace {

Vec3 add(const Vec3& a, const Vec3& b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 sub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 mul(const Vec3& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }
double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]};
}
Vec3 normalized(const Vec3& a) {
  const double n = norm(a);
  return {a[0] / n, a[1] / n, a[2] / n};
}

std::vector<double> cumulative_arclength(const CenterlineSegment& s) {
  std::vector<double> cum(s.points.size(), 0.0);
  for (std::size_t i = 1; i < s.points.size(); ++i)
    cum[i] = cum[i - 1] + norm(sub(s.points[i], s.points[i - 1]));
  return cum;
}

std::string method_tag_check(const std::string& m) {
  if (m.find(',') != std::string::npos) throw ConfigError("method tag may not contain ','");
  return m;
}

}  // namespace

bool Volume3D::contains(const Vec3& p) const {
  const int dims[3] = {nx, ny, nz};
  for (int a = 0; a < 3; ++a) {
    const double f = (p[a] - origin[a]) / spacing[a];
    if (!(f >= -1e-9 && f <= dims[a] - 1 + 1e-9)) return false;
  }
  return true;
}

double Volume3D::sample(const Vec3& p, double fill) const {
  double f[3];
  int i0[3];
  const int dims[3] = {nx, ny, nz};
  for (int a = 0; a < 3; ++a) {
    f[a] = (p[a] - origin[a]) / spacing[a];
    if (!(f[a] >= -1e-9 && f[a] <= dims[a] - 1 + 1e-9)) return fill;
    f[a] = std::clamp(f[a], 0.0, static_cast<double>(dims[a] - 1));
    i0[a] = std::min(static_cast<int>(f[a]), std::max(dims[a] - 2, 0));
    f[a] -= i0[a];
  }
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? f[2] : 1.0 - f[2];
    if (wz == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? f[1] : 1.0 - f[1];
      if (wy == 0.0) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? f[0] : 1.0 - f[0];
        if (wx == 0.0) continue;
        acc += wx * wy * wz * at(i0[0] + dx, i0[1] + dy, i0[2] + dz);
      }
    }
  }
  return acc;
}

void write_volume(const fs::path& dir, const Volume3D& v) {
  if (v.spacing[0] != v.spacing[1])
    throw ConfigError("volume files require equal x and y spacing");
  io::Bundle b;
  b.count = 1;
  b.height = v.ny;
  b.width = v.nx;
  b.pixel_spacing_mm = v.spacing[0];
  b.data = v.data;
  b.extra["depth"] = std::to_string(v.nz);
  b.extra["slice_spacing_mm"] = io::format_double(v.spacing[2]);
  b.extra["origin_mm"] = io::format_double(v.origin[0]) + " " + io::format_double(v.origin[1]) +
                         " " + io::format_double(v.origin[2]);
  // write_bundle validates count*H*W; volumes carry depth slices.
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create directory: " + ec.message());
  std::vector<std::pair<std::string, std::string>> entries{
      {"count", "1"},
      {"height", std::to_string(v.ny)},
      {"width", std::to_string(v.nx)},
      {"pixel_spacing_mm", io::format_double(v.spacing[0])},
      {"dtype", "float32-le"},
      {"order", "row-major"},
  };
  for (const auto& kv : b.extra) entries.push_back(kv);
  io::write_manifest(dir / "manifest.txt", entries);
  io::write_floats_le(dir / "patches.bin", v.data);
}

Volume3D read_volume(const fs::path& dir) {
  const io::Bundle b = io::read_bundle(dir);
  if (!b.extra.count("depth")) throw IoError(dir.string(), "manifest has no 'depth' key");
  Volume3D v;
  v.nx = b.width;
  v.ny = b.height;
  v.nz = static_cast<int>(io::parse_int(b.extra.at("depth"), "depth"));
  v.spacing = {b.pixel_spacing_mm, b.pixel_spacing_mm, b.pixel_spacing_mm};
  if (b.extra.count("slice_spacing_mm"))
    v.spacing[2] = io::parse_double(b.extra.at("slice_spacing_mm"), "slice_spacing_mm");
  if (b.extra.count("origin_mm")) {
    std::istringstream is(b.extra.at("origin_mm"));
    std::string tok;
    for (int a = 0; a < 3; ++a) {
      if (!(is >> tok)) throw IoError(dir.string(), "origin_mm needs three values");
      v.origin[a] = io::parse_double(tok, "origin_mm");
    }
  }
  v.data = b.data;
  if (v.spacing[0] <= 0 || v.spacing[2] <= 0) throw DataError("volume spacing must be positive");
  return v;
}

double CenterlineSegment::length() const {
  const auto cum = cumulative_arclength(*this);
  return cum.empty() ? 0.0 : cum.back();
}

void validate(const CenterlineSegment& s) {
  const std::string where = "segment " + std::to_string(s.segment_id);
  if (s.points.size() != s.tangents.size())
    throw DataError(where + ": point and tangent counts differ");
  if (s.points.empty()) throw DataError(where + ": no centreline points");
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    if (std::abs(norm(s.tangents[i]) - 1.0) > 1e-6)
      throw DataError(where + ": tangent " + std::to_string(i) + " is not unit length");
    if (i > 0 && norm(sub(s.points[i], s.points[i - 1])) > 1.0 + 1e-9)
      throw DataError(where + ": consecutive points more than 1 mm apart at index " +
                      std::to_string(i));
  }
}

std::vector<CenterlineSegment> read_centerlines(const fs::path& csv) {
  const io::CsvTable t = io::read_csv(csv);
  const std::size_t c_id = t.column("segment_id"), c_parent = t.column("parent_id"),
                    c_gen = t.column("generation"), c_x = t.column("x_mm"),
                    c_y = t.column("y_mm"), c_z = t.column("z_mm"), c_tx = t.column("tx"),
                    c_ty = t.column("ty"), c_tz = t.column("tz");
  std::vector<CenterlineSegment> segments;
  std::map<int, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = csv.string() + " row " + std::to_string(r + 1);
    const int id = static_cast<int>(io::parse_int(row[c_id], ctx));
    auto it = index.find(id);
    if (it == index.end()) {
      CenterlineSegment s;
      s.segment_id = id;
      if (!row[c_parent].empty()) {
        const long long p = io::parse_int(row[c_parent], ctx);
        if (p >= 0) s.parent_id = static_cast<int>(p);
      }
      s.generation = static_cast<int>(io::parse_int(row[c_gen], ctx));
      it = index.emplace(id, segments.size()).first;
      segments.push_back(std::move(s));
    }
    CenterlineSegment& s = segments[it->second];
    s.points.push_back({io::parse_double(row[c_x], ctx), io::parse_double(row[c_y], ctx),
                        io::parse_double(row[c_z], ctx)});
    s.tangents.push_back({io::parse_double(row[c_tx], ctx), io::parse_double(row[c_ty], ctx),
                          io::parse_double(row[c_tz], ctx)});
  }
  for (const auto& s : segments) validate(s);
  return segments;
}

void write_centerlines(const fs::path& csv, const std::vector<CenterlineSegment>& segments) {
  io::CsvTable t;
  t.header = {"segment_id", "parent_id", "generation", "x_mm", "y_mm", "z_mm", "tx", "ty", "tz"};
  for (const auto& s : segments) {
    for (std::size_t i = 0; i < s.points.size(); ++i) {
      t.rows.push_back({std::to_string(s.segment_id),
                        s.parent_id ? std::to_string(*s.parent_id) : std::string(),
                        std::to_string(s.generation), io::format_double(s.points[i][0]),
                        io::format_double(s.points[i][1]), io::format_double(s.points[i][2]),
                        io::format_double(s.tangents[i][0]), io::format_double(s.tangents[i][1]),
                        io::format_double(s.tangents[i][2])});
    }
  }
  io::write_csv(csv, t);
}

PlaneBasis plane_basis(const Vec3& tangent, double rotation) {
  const Vec3 t = normalized(tangent);
  int axis = 0;
  for (int a = 1; a < 3; ++a)
    if (std::abs(t[a]) < std::abs(t[axis])) axis = a;
  Vec3 e{0.0, 0.0, 0.0};
  e[axis] = 1.0;
  const Vec3 u = normalized(cross(t, e));
  const Vec3 v = normalized(cross(t, u));
  if (rotation == 0.0) return {u, v};
  const double c = std::cos(rotation), s = std::sin(rotation);
  return {add(mul(u, c), mul(v, s)), add(mul(u, -s), mul(v, c))};
}

Image extract_patch(const Volume3D& volume, const Vec3& point, const Vec3& tangent, int size_px,
                    double spacing_mm, double rotation) {
  if (!volume.contains(point)) {
    std::ostringstream os;
    os << "extraction point (" << point[0] << ", " << point[1] << ", " << point[2]
       << ") mm lies outside the volume";
    throw DataError(os.str());
  }
  if (std::abs(norm(tangent) - 1.0) > 1e-6) throw DataError("extraction tangent is not unit length");
  const PlaneBasis basis = plane_basis(tangent, rotation);
  Image out(size_px, size_px);
  for (int r = 0; r < size_px; ++r) {
    const double y = pixel_centre_mm(r, size_px, spacing_mm);
    for (int c = 0; c < size_px; ++c) {
      const double x = pixel_centre_mm(c, size_px, spacing_mm);
      const Vec3 p = add(point, add(mul(basis.u, x), mul(basis.v, y)));
      out.at(r, c) = static_cast<float>(volume.sample(p, kOutsideHu));
    }
  }
  return out;
}

std::vector<SamplePoint> sample_positions(const CenterlineSegment& segment,
                                          const SeriesConfig& config) {
  validate(segment);
  const auto cum = cumulative_arclength(segment);
  const double length = cum.back();
  std::vector<SamplePoint> out;
  if (length <= 2.0 * config.prune_mm) return out;
  std::size_t seg = 0;
  for (int k = 0;; ++k) {
    const double s = config.prune_mm + k * config.step_mm;
    if (s > length - config.prune_mm + 1e-9) break;
    while (seg + 2 < cum.size() && cum[seg + 1] < s) ++seg;
    const double span = cum[seg + 1] - cum[seg];
    const double f = span > 0.0 ? std::clamp((s - cum[seg]) / span, 0.0, 1.0) : 0.0;
    SamplePoint p;
    p.arclength = s;
    p.point = add(segment.points[seg], mul(sub(segment.points[seg + 1], segment.points[seg]), f));
    p.tangent = normalized(
        add(mul(segment.tangents[seg], 1.0 - f), mul(segment.tangents[seg + 1], f)));
    out.push_back(p);
  }
  return out;
}

double lumen_diameter(const AirwayLabel& label, DiameterMode mode) {
  return mode == DiameterMode::EquivalentArea ? 2.0 * std::sqrt(label.r_a * label.r_b)
                                              : label.r_a + label.r_b;
}

SeriesOutcome assemble_series(const CenterlineSegment& segment,
                              const std::vector<SamplePoint>& positions,
                              const std::vector<std::optional<AirwayLabel>>& measurements,
                              const std::string& method, const SeriesConfig& config) {
  SeriesOutcome outcome;
  if (positions.empty()) {
    outcome.exclusion_reason = "too short after pruning";
    return outcome;
  }
  if (positions.size() != measurements.size())
    throw DataError("segment " + std::to_string(segment.segment_id) +
                    ": measurement count does not match sample positions");
  const std::size_t n = positions.size();
  std::vector<int> valid;
  for (std::size_t i = 0; i < n; ++i)
    if (measurements[i] && measurements[i]->r_a > 0.0 && measurements[i]->r_b > 0.0)
      valid.push_back(static_cast<int>(i));
  const double missing = static_cast<double>(n - valid.size()) / n;
  if (valid.empty() || missing > config.max_missing_fraction) {
    std::ostringstream os;
    os << "too many failed measurements (" << (n - valid.size()) << " of " << n << ")";
    outcome.exclusion_reason = os.str();
    return outcome;
  }

  SegmentSeries s;
  s.segment_id = segment.segment_id;
  s.parent_id = segment.parent_id;
  s.generation = segment.generation;
  s.method = method_tag_check(method);
  s.n_missing = static_cast<int>(n - valid.size());
  std::vector<double> d(n), a(n);
  for (int i : valid) {
    d[i] = lumen_diameter(*measurements[i], config.diameter);
    a[i] = 3.14159265358979323846 * measurements[i]->r_a * measurements[i]->r_b;
  }
  // Fill failed positions by linear interpolation between valid neighbours.
  for (std::size_t i = 0; i < n; ++i) {
    if (std::binary_search(valid.begin(), valid.end(), static_cast<int>(i))) continue;
    const auto hi = std::upper_bound(valid.begin(), valid.end(), static_cast<int>(i));
    if (hi == valid.begin()) {
      d[i] = d[*hi];
      a[i] = a[*hi];
    } else if (hi == valid.end()) {
      d[i] = d[*(hi - 1)];
      a[i] = a[*(hi - 1)];
    } else {
      const int l = *(hi - 1), r = *hi;
      const double f = static_cast<double>(static_cast<int>(i) - l) / (r - l);
      d[i] = d[l] + f * (d[r] - d[l]);
      a[i] = a[l] + f * (a[r] - a[l]);
    }
  }
  for (std::size_t i = 0; i < n; ++i) s.arclength_mm.push_back(positions[i].arclength);
  s.diameter_mm = std::move(d);
  s.area_mm2 = std::move(a);
  outcome.series = std::move(s);
  return outcome;
}

SeriesOutcome build_segment_series(const CenterlineSegment& segment, const MeasureFn& measure,
                                   const std::string& method, const SeriesConfig& config) {
  const auto positions = sample_positions(segment, config);
  std::vector<std::optional<AirwayLabel>> measured;
  measured.reserve(positions.size());
  for (const auto& p : positions) measured.push_back(measure(p));
  return assemble_series(segment, positions, measured, method, config);
}

bool eligible_for_biomarkers(int generation) { return generation >= 2; }

void write_series_csv(const fs::path& csv, const std::vector<SegmentSeries>& series) {
  io::CsvTable t;
  t.header = {"segment_id", "parent_id", "arclength_mm", "diameter_mm", "area_mm2", "method"};
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.arclength_mm.size(); ++i) {
      t.rows.push_back({std::to_string(s.segment_id),
                        s.parent_id ? std::to_string(*s.parent_id) : std::string(),
                        io::format_double(s.arclength_mm[i]), io::format_double(s.diameter_mm[i]),
                        io::format_double(s.area_mm2[i]), s.method});
    }
  }
  io::write_csv(csv, t);
}

std::vector<SegmentSeries> read_series_csv(const fs::path& csv) {
  const io::CsvTable t = io::read_csv(csv);
  const std::size_t c_id = t.column("segment_id"), c_parent = t.column("parent_id"),
                    c_s = t.column("arclength_mm"), c_d = t.column("diameter_mm"),
                    c_a = t.column("area_mm2"), c_m = t.column("method");
  std::vector<SegmentSeries> out;
  std::map<std::pair<int, std::string>, std::size_t> index;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    const std::string ctx = csv.string() + " row " + std::to_string(r + 1);
    const int id = static_cast<int>(io::parse_int(row[c_id], ctx));
    const auto key = std::make_pair(id, row[c_m]);
    auto it = index.find(key);
    if (it == index.end()) {
      SegmentSeries s;
      s.segment_id = id;
      if (!row[c_parent].empty()) s.parent_id = static_cast<int>(io::parse_int(row[c_parent], ctx));
      s.method = row[c_m];
      it = index.emplace(key, out.size()).first;
      out.push_back(std::move(s));
    }
    SegmentSeries& s = out[it->second];
    s.arclength_mm.push_back(io::parse_double(row[c_s], ctx));
    s.diameter_mm.push_back(io::parse_double(row[c_d], ctx));
    s.area_mm2.push_back(io::parse_double(row[c_a], ctx));
  }
  return out;
}

}  // namespace atn::patches3d
