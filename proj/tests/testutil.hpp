#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "tard/matrix.hpp"

namespace tard::testutil {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                            double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Matrix m(rows, cols);
    for (double& v : m.storage()) v = dist(rng);
    return m;
}

// Relative error with a floor so near-zero pairs compare absolutely.
inline double rel_error(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
    return std::abs(a - b) / scale;
}

// Central finite difference d f / d x at the given parameter slot.
inline double central_diff(std::function<double()> f, double& slot, double h = 1e-5) {
    const double saved = slot;
    slot = saved + h;
    const double up = f();
    slot = saved - h;
    const double down = f();
    slot = saved;
    return (up - down) / (2.0 * h);
}

}  // namespace tard::testutil
