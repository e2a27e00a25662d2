#include "ppm/diffusion.hpp"

#include <cmath>

#include "ppm/errors.hpp"

namespace ppm {

void validate(const DiffusionParams& params) {
  if (params.iterations < 1)
    throw ValidationError("diffusion iterations must be >= 1");
  if (!(params.time_step > 0.0))
    throw ValidationError("diffusion time step must be > 0");
  if (params.time_step > 1.0 / 16.0)
    throw ValidationError("diffusion time step " + std::to_string(params.time_step) +
                          " exceeds the 3D stability bound 1/16");
  if (!(params.conductance > 0.0))
    throw ValidationError("diffusion conductance must be > 0");
}

ScalarVolume perona_malik(const ScalarVolume& vol, const DiffusionParams& params) {
  validate(params);
  vol.validate();

  const int nx = vol.dims[0], ny = vol.dims[1], nz = vol.dims[2];
  const double inv_kappa2 = 1.0 / (params.conductance * params.conductance);
  const double inv_s2[3] = {1.0 / (vol.spacing[0] * vol.spacing[0]),
                            1.0 / (vol.spacing[1] * vol.spacing[1]),
                            1.0 / (vol.spacing[2] * vol.spacing[2])};
  const double dt = params.time_step;

  ScalarVolume cur = vol;
  ScalarVolume next = vol;

  const auto g = [inv_kappa2](double s) { return std::exp(-s * s * inv_kappa2); };

  for (int it = 0; it < params.iterations; ++it) {
    for (int k = 0; k < nz; ++k) {
      for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
          const std::size_t idx = cur.index(i, j, k);
          const double c = cur.data[idx];
          double divergence = 0.0;
          const int pos[3] = {i, j, k};
          const int hi[3] = {nx - 1, ny - 1, nz - 1};
          const std::size_t stride[3] = {1, static_cast<std::size_t>(nx),
                                         static_cast<std::size_t>(nx) * ny};
          for (int a = 0; a < 3; ++a) {
            // Zero flux across the boundary.
            const double fwd = pos[a] < hi[a] ? cur.data[idx + stride[a]] - c : 0.0;
            const double bwd = pos[a] > 0 ? c - cur.data[idx - stride[a]] : 0.0;
            divergence += (g(std::abs(fwd)) * fwd - g(std::abs(bwd)) * bwd) * inv_s2[a];
          }
          next.data[idx] = static_cast<float>(c + dt * divergence);
        }
      }
    }
    std::swap(cur, next);
  }
  return cur;
}

}  // namespace ppm
