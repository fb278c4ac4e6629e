#pragma once

#include <span>
#include <vector>

namespace pivotreg {

// Linear interpolation between order statistics (the "type 7" rule):
// h = (n - 1) p, q = x[floor h] + frac(h) * (x[floor h + 1] - x[floor h]).
// `sorted` must be ascending and nonempty; p in [0, 1].
double quantile_sorted(std::span<const double> sorted, double p);

// Copies and sorts before delegating to quantile_sorted.
double quantile(std::span<const double> values, double p);

}  // namespace pivotreg
