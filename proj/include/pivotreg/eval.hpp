#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pivotreg/bayes.hpp"
#include "pivotreg/correction.hpp"
#include "pivotreg/lasso.hpp"
#include "pivotreg/time_series.hpp"

namespace pivotreg {

// gtrend, wiki_cryptocurrency, difficulty, n_unique_addresses,
// total_bitcoins, volume
const std::vector<std::string>& default_features();

// Root mean squared error after mapping both sides back to price units with
// expm1.
double rmse_price(std::span<const double> predicted_log, std::span<const double> actual_log);

// train = dates < boundary, test = dates >= boundary. Throws
// ValidationError if either side would be empty.
std::pair<Dataset, Dataset> time_split(const Dataset& dataset, Date boundary);

struct ExperimentOptions {
    std::vector<std::string> features = default_features();
    // Fixed penalty; when unset the penalty is chosen from lambda_grid by
    // forward-chaining cross-validation on the training window.
    std::optional<double> lambda;
    std::vector<double> lambda_grid{0.0, 1e-4, 1e-3, 1e-2, 1e-1};
    int n_folds = 5;
    LassoConfig lasso;

    // When set, scales, lambda and all fits use dates before `split` only and
    // headline RMSE values are measured on the remaining dates.
    std::optional<Date> split;

    bool run_bayes = true;
    PriorSpec priors;
    McmcConfig mcmc;
    double var_level = 0.05;
    int predictive_draws = 10'000;

    // Only the Bayesian stage honours the deadline; when it passes the report
    // comes back with partial = true and no posterior sections.
    std::optional<std::chrono::steady_clock::time_point> deadline;
};

struct FitTable {
    double intercept = 0.0;
    std::vector<std::pair<std::string, double>> coefficients;
    double lambda = 0.0;
    int n_iter = 0;
    bool converged = false;
};

struct BayesSection {
    std::vector<ParamSummary> params;
    std::vector<Diagnostic> diagnostics;
    double sigma_median = 0.0;
};

struct SeriesRow {
    Date date;
    bool test = false;
    double actual_log = 0.0;
    double base_log = 0.0;
    double deviation = 0.0;
    std::optional<double> correction;
    std::optional<double> corrected_log;
};

struct ExperimentReport {
    std::string rmse_mode;  // "in_sample" or "out_of_sample"
    double rmse_base = 0.0;
    std::optional<double> rmse_corrected;
    double rmse_base_in_sample = 0.0;
    std::optional<double> rmse_corrected_in_sample;
    std::optional<double> sigma_base_median;
    std::optional<double> sigma_corrected_median;
    double lambda = 0.0;
    std::optional<Date> split;
    std::size_t n_train = 0;
    std::size_t n_test = 0;
    FitTable base_fit;
    std::optional<FitTable> corrected_fit;
    std::optional<PivotSet> pivots;
    std::optional<BayesSection> bayes_base;
    std::optional<BayesSection> bayes_corrected;
    std::optional<VarEstimate> var;
    bool partial = false;  // Bayesian stage skipped or timed out
    std::uint64_t seed = 0;

    // Per-date series for plotting; exported as CSV, not part of the JSON.
    std::vector<SeriesRow> rows;
};

// Base Lasso fit, optional expert-corrected refit, Bayesian fits of both and
// VaR at the last date. An empty pivot set is treated as no pivots. Errors
// from any stage are rethrown as StageError naming the stage.
ExperimentReport run_experiment(const Dataset& dataset, const std::optional<PivotSet>& pivots,
                                const ExperimentOptions& options);

nlohmann::ordered_json report_to_json(const ExperimentReport& report);
nlohmann::ordered_json fit_to_json(const FitTable& fit);
FitTable fit_table(const LassoFit& fit);

// date,split,actual_log,base_log,deviation,correction,corrected_log
std::string series_to_csv(const ExperimentReport& report);

}  // namespace pivotreg
