#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "restriction/hull.hpp"

namespace restriction {

// A sampled path in the closed upper half-plane.  Shared between the Loewner
// engines (trace extraction) and the stochastic samplers.
struct PathSample {
    std::vector<double> times;    // increasing, times[0] = 0
    std::vector<Complex> points;  // Im >= -1e-12 throughout
    std::string scheme;           // "euler" | "exact-gaussian-step"
    double dt = 0.0;
    std::uint64_t seed = 0;
    std::string horizon;          // stopping rule tag, e.g. "height:8" or "capacity:1"
};

}  // namespace restriction
