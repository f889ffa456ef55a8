#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace geomix {

struct GradCheckReport {
  // normalized error per tensor: max |analytic - fd| / max(1, |analytic|, |fd|)
  std::vector<std::pair<std::string, double>> errors;
  double max_error = 0.0;
};

// Central finite differences (h = 1e-5) against the hand-written reverse
// pass on a small random instance. Instances whose hidden pre-activations
// sit too close to the relu kink are reseeded.
GradCheckReport gradcheck_gcn(std::uint64_t seed);

// Same check through the full adaptive pipeline: mixup hops with learnable
// projections feeding the classifier and the mixed-label loss.
GradCheckReport gradcheck_geomix3(std::uint64_t seed);

}  // namespace geomix
