#include "dictllm/rng.hpp"

#include <cmath>

namespace dictllm {

double Rng::next_normal() {
    if (have_cached_) {
        have_cached_ = false;
        return cached_;
    }
    // u1 in (0,1] so log is finite.
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    have_cached_ = true;
    return r * std::cos(theta);
}

}  // namespace dictllm
