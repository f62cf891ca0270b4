#pragma once

#include <vector>

#include "atn/patches3d.hpp"

namespace atn::phantom {

using patches3d::Vec3;

/// Straight airway piece between two centreline points. Radii vary linearly
/// from start to end; the cross-section may be elliptical, with the major
/// axis at `theta` in the deterministic plane basis of the tube direction.
struct Tube {
  Vec3 start{};
  Vec3 end{};
  double lumen_start_mm = 1.0;
  double lumen_end_mm = 1.0;
  double wall_start_mm = 0.5;  // thickness
  double wall_end_mm = 0.5;
  double ratio = 1.0;  // minor / major
  double theta = 0.0;
};

struct Grid {
  int nx = 0, ny = 0, nz = 0;
  double spacing_mm = 0.5;
  Vec3 origin{};
};

struct Intensities {
  double lumen_hu = -1000.0;
  double wall_hu = 0.0;
  double parenchyma_hu = -800.0;
};

patches3d::Volume3D render_tubes(const std::vector<Tube>& tubes, const Grid& grid,
                                 const Intensities& hu = {}, int supersample = 2);

}  // namespace atn::phantom
