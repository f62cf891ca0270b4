#include "atn/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "atn/errors.hpp"

namespace atn::phantom {

namespace {

struct Prepared {
  Vec3 a{};
  Vec3 dir{};
  double length = 0.0;
  patches3d::PlaneBasis basis{};
  double cos_t = 1.0, sin_t = 0.0;
  Tube spec;
  Vec3 lo{}, hi{};  // bounding box
};

Prepared prepare(const Tube& t) {
  Prepared p;
  p.spec = t;
  p.a = t.start;
  const Vec3 d{t.end[0] - t.start[0], t.end[1] - t.start[1], t.end[2] - t.start[2]};
  p.length = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
  if (!(p.length > 0.0)) throw ConfigError("phantom tube has zero length");
  p.dir = {d[0] / p.length, d[1] / p.length, d[2] / p.length};
  p.basis = patches3d::plane_basis(p.dir);
  p.cos_t = std::cos(t.theta);
  p.sin_t = std::sin(t.theta);
  const double reach = std::max(t.lumen_start_mm + t.wall_start_mm, t.lumen_end_mm + t.wall_end_mm);
  for (int k = 0; k < 3; ++k) {
    p.lo[k] = std::min(t.start[k], t.end[k]) - reach;
    p.hi[k] = std::max(t.start[k], t.end[k]) + reach;
  }
  return p;
}

// 0 lumen, 1 wall, 2 outside.
int classify(const Prepared& p, const Vec3& x) {
  for (int k = 0; k < 3; ++k)
    if (x[k] < p.lo[k] || x[k] > p.hi[k]) return 2;
  const Vec3 r{x[0] - p.a[0], x[1] - p.a[1], x[2] - p.a[2]};
  const double along = r[0] * p.dir[0] + r[1] * p.dir[1] + r[2] * p.dir[2];
  const double f = std::clamp(along / p.length, 0.0, 1.0);
  const Vec3 q{r[0] - p.dir[0] * f * p.length, r[1] - p.dir[1] * f * p.length,
               r[2] - p.dir[2] * f * p.length};
  const double pu = q[0] * p.basis.u[0] + q[1] * p.basis.u[1] + q[2] * p.basis.u[2];
  const double pv = q[0] * p.basis.v[0] + q[1] * p.basis.v[1] + q[2] * p.basis.v[2];
  const double eu = pu * p.cos_t + pv * p.sin_t;
  const double ev = -pu * p.sin_t + pv * p.cos_t;
  const Tube& t = p.spec;
  const double lumen = t.lumen_start_mm + f * (t.lumen_end_mm - t.lumen_start_mm);
  const double outer = lumen + t.wall_start_mm + f * (t.wall_end_mm - t.wall_start_mm);
  // Wall thickness is added to both semi-axes, matching the 2D generator.
  const double la = lumen, lb = lumen * t.ratio;
  if ((eu * eu) / (la * la) + (ev * ev) / (lb * lb) <= 1.0) return 0;
  const double wa = outer, wb = lb + (outer - lumen);
  if ((eu * eu) / (wa * wa) + (ev * ev) / (wb * wb) <= 1.0) return 1;
  return 2;
}

}  // namespace

patches3d::Volume3D render_tubes(const std::vector<Tube>& tubes, const Grid& grid,
                                 const Intensities& hu, int supersample) {
  if (grid.nx <= 0 || grid.ny <= 0 || grid.nz <= 0 || !(grid.spacing_mm > 0.0))
    throw ConfigError("phantom grid must have positive dimensions and spacing");
  if (supersample < 1) throw ConfigError("supersample must be >= 1");
  std::vector<Prepared> prepared;
  for (const Tube& t : tubes) prepared.push_back(prepare(t));

  patches3d::Volume3D vol;
  vol.nx = grid.nx;
  vol.ny = grid.ny;
  vol.nz = grid.nz;
  vol.spacing = {grid.spacing_mm, grid.spacing_mm, grid.spacing_mm};
  vol.origin = grid.origin;
  vol.data.assign(static_cast<std::size_t>(grid.nx) * grid.ny * grid.nz,
                  static_cast<float>(hu.parenchyma_hu));
  const int ss = supersample;
  const double w = 1.0 / (ss * ss * ss);
  for (int z = 0; z < grid.nz; ++z) {
    for (int y = 0; y < grid.ny; ++y) {
      for (int x = 0; x < grid.nx; ++x) {
        const Vec3 centre{grid.origin[0] + x * grid.spacing_mm, grid.origin[1] + y * grid.spacing_mm,
                          grid.origin[2] + z * grid.spacing_mm};
        std::vector<const Prepared*> near;
        for (const auto& p : prepared) {
          bool in = true;
          for (int k = 0; k < 3; ++k)
            in = in && centre[k] >= p.lo[k] - grid.spacing_mm && centre[k] <= p.hi[k] + grid.spacing_mm;
          if (in) near.push_back(&p);
        }
        if (near.empty()) continue;
        double acc = 0.0;
        for (int i = 0; i < ss; ++i)
          for (int j = 0; j < ss; ++j)
            for (int k = 0; k < ss; ++k) {
              const Vec3 s{centre[0] + ((i + 0.5) / ss - 0.5) * grid.spacing_mm,
                           centre[1] + ((j + 0.5) / ss - 0.5) * grid.spacing_mm,
                           centre[2] + ((k + 0.5) / ss - 0.5) * grid.spacing_mm};
              int cls = 2;
              for (const Prepared* p : near) cls = std::min(cls, classify(*p, s));
              acc += cls == 0 ? hu.lumen_hu : cls == 1 ? hu.wall_hu : hu.parenchyma_hu;
            }
        vol.at(x, y, z) = static_cast<float>(acc * w);
      }
    }
  }
  return vol;
}

}  // namespace atn::phantom
