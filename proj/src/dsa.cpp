#include "ppm/dsa.hpp"

#include <algorithm>

#include "ppm/errors.hpp"

namespace ppm {

ScalarVolume subtract_normalize(const ScalarVolume& cta, const ScalarVolume& ct) {
  check_compatible(cta.geometry(), ct.geometry());

  ScalarVolume out;
  out.dims = cta.dims;
  out.spacing = cta.spacing;
  out.affine = cta.affine;
  out.data.resize(cta.data.size());

  float max_d = 0.0f;
  for (std::size_t i = 0; i < cta.data.size(); ++i) {
    const float d = std::max(cta.data[i] - ct.data[i], 0.0f);
    out.data[i] = d;
    max_d = std::max(max_d, d);
  }
  if (!(max_d > 0.0f))
    throw ValidationError(
        "degenerate input: CTA minus CT is non-positive everywhere (no contrast)");

  for (float& v : out.data) v /= max_d;
  return out;
}

}  // namespace ppm
