#pragma once

#include "ppm/volume.hpp"

namespace ppm {

/// Digitally subtracted angiography volume: d(x) = max(cta(x) - ct(x), 0),
/// normalized by its global maximum. Output values lie in [0,1] with the
/// maximum attained exactly; geometry equals the CTA geometry.
/// Throws ValidationError on incompatible grids or when the difference is
/// zero everywhere (no contrast).
ScalarVolume subtract_normalize(const ScalarVolume& cta, const ScalarVolume& ct);

}  // namespace ppm
