#include "pivotreg/quantile.hpp"

#include <algorithm>
#include <cmath>

#include "pivotreg/error.hpp"

namespace pivotreg {

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty()) throw SizeError("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw UsageError("quantile probability must lie in [0, 1]");
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    if (frac == 0.0) return sorted[lo];
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double quantile(std::span<const double> values, double p) {
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    return quantile_sorted(sorted, p);
}

}  // namespace pivotreg
