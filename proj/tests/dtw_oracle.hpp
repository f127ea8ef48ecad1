#pragma once

#include <cmath>
#include <limits>
#include <span>

namespace test {

// Exhaustive DTW: walks every monotone path from (0,0) to (n-1,m-1),
// accumulating costs in path order, and keeps the cheapest.
inline double dtw_brute_force(std::span<const double> a, std::span<const double> b) {
    double best = std::numeric_limits<double>::infinity();
    auto walk = [&](auto&& self, std::size_t i, std::size_t j, double acc) -> void {
        if (i == a.size() - 1 && j == b.size() - 1) {
            if (acc < best) best = acc;
            return;
        }
        if (i + 1 < a.size() && j + 1 < b.size()) self(self, i + 1, j + 1, acc + std::abs(a[i + 1] - b[j + 1]));
        if (i + 1 < a.size()) self(self, i + 1, j, acc + std::abs(a[i + 1] - b[j]));
        if (j + 1 < b.size()) self(self, i, j + 1, acc + std::abs(a[i] - b[j + 1]));
    };
    walk(walk, 0, 0, std::abs(a[0] - b[0]));
    return best;
}

}  // namespace test
