#pragma once

#include "ppm/volume.hpp"

namespace ppm {

struct DiffusionParams {
  int iterations = 5;
  double time_step = 0.0625;   // explicit-scheme stability bound in 3D: 1/16
  double conductance = 1.0;    // kappa, in units of the normalized intensity gradient
};

/// Throws ValidationError when the parameters violate the stability bound
/// (time_step <= 1/16, iterations >= 1, conductance > 0).
void validate(const DiffusionParams& params);

/// Gradient anisotropic (Perona-Malik) diffusion with exponential conductance
/// g(s) = exp(-(s/kappa)^2). Explicit flux-form update on one-sided axis
/// differences with zero-flux boundaries; per-axis spacing enters as 1/s_a^2.
/// Jacobi-style iterations, deterministic.
ScalarVolume perona_malik(const ScalarVolume& vol, const DiffusionParams& params = {});

}  // namespace ppm
