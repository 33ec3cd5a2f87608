#include "dprp/rng.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace dprp {

double Rng::normal() {
    // Box-Muller; the second variate is discarded so the generator carries no
    // cached state between draws.
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

Rng Rng::deserialize(const std::string& state) {
    Rng r;
    std::istringstream is(state);
    is >> r.engine_;
    return r;
}

}  // namespace dprp
