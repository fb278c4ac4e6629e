#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pivotreg/correction.hpp"
#include "pivotreg/time_series.hpp"

namespace pivotreg {

// Generator for datasets with known ground truth:
//   ln(price + 1) = alpha + sum_j beta_j z_j + d(t) + sigma * t_nu
// where z_j are the standardized log1p features (exactly as build_design
// computes them) and d is a piecewise-linear deviation through pivots whose
// values alternate between +amplitude and -amplitude.
struct SyntheticSpec {
    int n_days = 500;
    Date start = Date{std::chrono::year{2017} / 1 / 1};
    double alpha = 8.0;
    std::vector<std::pair<std::string, double>> betas{
        {"gtrend", 0.5},           {"wiki_cryptocurrency", 0.3}, {"difficulty", 0.2},
        {"n_unique_addresses", -0.15}, {"total_bitcoins", 0.1},     {"volume", 0.25}};
    double noise_sigma = 0.1;
    double noise_nu = 4.0;
    int n_pivots = 6;
    double pivot_amplitude = 0.3;  // 0 disables the deviation
    double outlier_fraction = 0.0;
    double outlier_shift = 10.0;
    std::uint64_t seed = 0;
};

struct SyntheticData {
    Dataset dataset;
    PivotSet oracle_pivots;         // empty when no deviation was injected
    std::vector<double> deviation;  // d(t) per date
    std::vector<std::size_t> outlier_rows;
    std::vector<std::string> features;

    // Ground truth in the parameterisation the model sees: for the design
    // without the expert column, and for the design with it appended (the
    // expert coefficient is sd(d) and the intercept absorbs mean(d)).
    double alpha = 0.0;
    std::vector<double> betas;
    double alpha_with_expert = 0.0;
    double beta_expert = 0.0;
    double sigma = 0.0;
    double nu = 0.0;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace pivotreg
