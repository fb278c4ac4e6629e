#include "pivotreg/eval.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>

#include "pivotreg/error.hpp"

namespace pivotreg {

namespace {

template <typename F>
auto stage(const char* name, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const Error& e) {
        throw StageError(name, e, std::current_exception());
    }
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

BayesSection bayes_section(const PosteriorChains& chains) {
    BayesSection s;
    s.params = summarize(chains);
    s.diagnostics = diagnostics(chains);
    const auto k = chains.index_of("sigma");
    s.sigma_median = s.params[k].median;
    return s;
}

nlohmann::ordered_json bayes_to_json(const BayesSection& b) {
    nlohmann::ordered_json out;
    out["sigma_median"] = b.sigma_median;
    auto params = nlohmann::ordered_json::array();
    for (const auto& p : b.params) {
        params.push_back({{"name", p.name},
                          {"median", p.median},
                          {"q25", p.q25},
                          {"q75", p.q75},
                          {"whisker_low", p.whisker_low},
                          {"whisker_high", p.whisker_high}});
    }
    out["params"] = std::move(params);
    auto diag = nlohmann::ordered_json::array();
    for (const auto& d : b.diagnostics) {
        nlohmann::ordered_json j{{"name", d.name}};
        j["rhat"] = std::isfinite(d.rhat) ? nlohmann::ordered_json(d.rhat) : nlohmann::ordered_json(nullptr);
        j["ess"] = d.ess;
        j["degenerate"] = d.degenerate;
        diag.push_back(std::move(j));
    }
    out["diagnostics"] = std::move(diag);
    return out;
}

void check_pivot_window(const PivotSet& pivots, const std::vector<Date>& dates, const std::optional<Date>& split) {
    for (const auto& p : pivots.pivots()) {
        if (p.date < dates.front() || p.date > dates.back()) {
            throw ValidationError("pivot " + format_date(p.date) + " lies outside the dataset range " +
                                  format_date(dates.front()) + ".." + format_date(dates.back()));
        }
        if (split && p.date >= *split) {
            throw ValidationError("pivot " + format_date(p.date) + " is not before the split boundary " +
                                  format_date(*split));
        }
    }
}

std::vector<double> to_vector(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

const std::vector<std::string>& default_features() {
    static const std::vector<std::string> features{"gtrend",         "wiki_cryptocurrency", "difficulty",
                                                   "n_unique_addresses", "total_bitcoins", "volume"};
    return features;
}

double rmse_price(std::span<const double> predicted_log, std::span<const double> actual_log) {
    if (predicted_log.size() != actual_log.size()) throw SizeError("rmse_price: length mismatch");
    if (predicted_log.empty()) throw SizeError("rmse_price: empty input");
    double ss = 0.0;
    for (std::size_t i = 0; i < actual_log.size(); ++i) {
        const double e = std::expm1(predicted_log[i]) - std::expm1(actual_log[i]);
        ss += e * e;
    }
    return std::sqrt(ss / static_cast<double>(actual_log.size()));
}

std::pair<Dataset, Dataset> time_split(const Dataset& dataset, Date boundary) {
    const auto it = std::lower_bound(dataset.dates.begin(), dataset.dates.end(), boundary);
    const auto cut = static_cast<std::size_t>(it - dataset.dates.begin());
    if (cut == 0 || cut == dataset.size()) {
        throw ValidationError("split boundary " + format_date(boundary) + " leaves an empty train or test window");
    }
    return {dataset.slice(0, cut), dataset.slice(cut, dataset.size())};
}

FitTable fit_table(const LassoFit& fit) {
    FitTable t;
    t.intercept = fit.intercept;
    for (std::size_t j = 0; j < fit.names.size(); ++j) {
        t.coefficients.emplace_back(fit.names[j], fit.coefficients[static_cast<Eigen::Index>(j)]);
    }
    t.lambda = fit.lambda;
    t.n_iter = fit.n_iter;
    t.converged = fit.converged;
    return t;
}

ExperimentReport run_experiment(const Dataset& dataset, const std::optional<PivotSet>& pivots,
                                const ExperimentOptions& options) {
    stage("dataset", [&] { dataset.validate(); });
    ExperimentReport report;
    report.split = options.split;
    report.seed = options.mcmc.seed;

    Dataset train = dataset;
    std::optional<Dataset> test;
    if (options.split) {
        auto parts = stage("split", [&] { return time_split(dataset, *options.split); });
        train = std::move(parts.first);
        test = std::move(parts.second);
    }
    report.n_train = train.size();
    report.n_test = test ? test->size() : 0;
    report.rmse_mode = test ? "out_of_sample" : "in_sample";

    const DesignMatrix base_train = stage("preprocess", [&] { return build_design(train, options.features); });
    std::optional<DesignMatrix> base_test;
    if (test) base_test = stage("preprocess", [&] { return apply_design(*test, options.features, base_train.scales); });

    const double lambda = stage("lasso", [&] {
        return options.lambda ? *options.lambda
                              : select_lambda(base_train, options.lambda_grid, options.n_folds, options.lasso);
    });
    report.lambda = lambda;
    LassoConfig lasso_cfg = options.lasso;
    lasso_cfg.lambda = lambda;

    const LassoFit base_fit = stage("lasso", [&] { return fit_lasso(base_train, lasso_cfg); });
    report.base_fit = fit_table(base_fit);
    const Eigen::VectorXd base_pred_train = predict(base_fit, base_train);
    report.rmse_base_in_sample = rmse_price(to_vector(base_pred_train), to_vector(base_train.y));
    Eigen::VectorXd base_pred_test;
    if (base_test) {
        base_pred_test = predict(base_fit, *base_test);
        report.rmse_base = rmse_price(to_vector(base_pred_test), to_vector(base_test->y));
    } else {
        report.rmse_base = report.rmse_base_in_sample;
    }

    const bool corrected = pivots && !pivots->empty();
    std::optional<DesignMatrix> aug_train, aug_test;
    std::optional<LassoFit> corrected_fit;
    std::optional<CorrectionTerm> correction;
    if (corrected) {
        report.pivots = *pivots;
        stage("correction", [&] {
            check_pivot_window(*pivots, dataset.dates, options.split);
            correction = interpolate_correction(*pivots, dataset.dates);
            const auto& all = correction->series.points();
            const std::vector<Point> head(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(train.size()));
            CorrectionTerm train_term{TimeSeries(correction->series.name(), head), *pivots};
            aug_train = augment_design(base_train, train_term);
            if (base_test) {
                const std::vector<Point> tail(all.begin() + static_cast<std::ptrdiff_t>(train.size()), all.end());
                CorrectionTerm test_term{TimeSeries(correction->series.name(), tail), *pivots};
                aug_test = augment_design(*base_test, test_term, aug_train->scales.back());
            }
        });
        corrected_fit = stage("lasso", [&] { return fit_lasso(*aug_train, lasso_cfg); });
        report.corrected_fit = fit_table(*corrected_fit);
        report.rmse_corrected_in_sample =
            rmse_price(to_vector(predict(*corrected_fit, *aug_train)), to_vector(aug_train->y));
        report.rmse_corrected = aug_test ? rmse_price(to_vector(predict(*corrected_fit, *aug_test)), to_vector(aug_test->y))
                                         : *report.rmse_corrected_in_sample;
    }

    if (options.run_bayes) {
        try {
            McmcConfig cfg = options.mcmc;
            auto base_chains = stage("bayes", [&] { return sample_posterior(base_train, options.priors, cfg, options.deadline); });
            report.bayes_base = bayes_section(base_chains);
            report.sigma_base_median = report.bayes_base->sigma_median;

            const PosteriorChains* final_chains = &base_chains;
            std::optional<PosteriorChains> corr_chains;
            if (aug_train) {
                corr_chains = stage("bayes", [&] { return sample_posterior(*aug_train, options.priors, cfg, options.deadline); });
                report.bayes_corrected = bayes_section(*corr_chains);
                report.sigma_corrected_median = report.bayes_corrected->sigma_median;
                final_chains = &*corr_chains;
            }

            const DesignMatrix& last_design = aug_test ? *aug_test : aug_train ? *aug_train : base_test ? *base_test : base_train;
            const Eigen::Index last = last_design.rows() - 1;
            const Eigen::RowVectorXd row = last_design.x.row(last);
            auto draws = stage("bayes", [&] {
                return posterior_predictive(*final_chains, std::span<const double>(row.data(), static_cast<std::size_t>(row.size())),
                                            options.predictive_draws, options.mcmc.seed + 1);
            });
            report.var = value_at_risk(draws, options.var_level, last_design.dates[static_cast<std::size_t>(last)]);
        } catch (const StageError& e) {
            // Only a timeout degrades to a partial report.
            if (!e.cause_is<TimeoutError>()) throw;
            report.bayes_base.reset();
            report.bayes_corrected.reset();
            report.sigma_base_median.reset();
            report.sigma_corrected_median.reset();
            report.var.reset();
            report.partial = true;
        }
    } else {
        report.partial = true;
    }

    // Per-date rows.
    const std::size_t n_train = train.size();
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        SeriesRow r;
        const bool is_test = i >= n_train;
        const auto k = static_cast<Eigen::Index>(is_test ? i - n_train : i);
        r.date = dataset.dates[i];
        r.test = is_test;
        r.actual_log = is_test ? base_test->y[k] : base_train.y[k];
        r.base_log = is_test ? base_pred_test[k] : base_pred_train[k];
        r.deviation = r.actual_log - r.base_log;
        if (corrected) {
            r.correction = correction->series.points()[i].value;
            r.corrected_log = is_test ? predict(*corrected_fit, aug_test->slice_rows(k, k + 1))[0]
                                      : predict(*corrected_fit, aug_train->slice_rows(k, k + 1))[0];
        }
        report.rows.push_back(r);
    }
    return report;
}

nlohmann::ordered_json fit_to_json(const FitTable& fit) {
    nlohmann::ordered_json out;
    out["intercept"] = fit.intercept;
    auto coefs = nlohmann::ordered_json::array();
    for (const auto& [name, value] : fit.coefficients) coefs.push_back({{"name", name}, {"value", value}});
    out["coefficients"] = std::move(coefs);
    out["lambda"] = fit.lambda;
    out["n_iter"] = fit.n_iter;
    out["converged"] = fit.converged;
    return out;
}

nlohmann::ordered_json report_to_json(const ExperimentReport& r) {
    nlohmann::ordered_json out;
    out["rmse_mode"] = r.rmse_mode;
    out["rmse_base"] = r.rmse_base;
    if (r.rmse_corrected) out["rmse_corrected"] = *r.rmse_corrected;
    out["rmse_base_in_sample"] = r.rmse_base_in_sample;
    if (r.rmse_corrected_in_sample) out["rmse_corrected_in_sample"] = *r.rmse_corrected_in_sample;
    if (r.sigma_base_median) out["sigma_base_median"] = *r.sigma_base_median;
    if (r.sigma_corrected_median) out["sigma_corrected_median"] = *r.sigma_corrected_median;
    out["lambda"] = r.lambda;
    out["split"] = r.split ? nlohmann::ordered_json(format_date(*r.split)) : nlohmann::ordered_json(nullptr);
    out["n_train"] = r.n_train;
    out["n_test"] = r.n_test;
    out["base_fit"] = fit_to_json(r.base_fit);
    if (r.corrected_fit) out["corrected_fit"] = fit_to_json(*r.corrected_fit);
    if (r.pivots) out["pivots"] = pivots_to_json(*r.pivots);
    if (r.bayes_base) out["bayes_base"] = bayes_to_json(*r.bayes_base);
    if (r.bayes_corrected) out["bayes_corrected"] = bayes_to_json(*r.bayes_corrected);
    if (r.var) {
        out["var"] = {{"level", r.var->level},
                      {"horizon_date", r.var->horizon_date ? nlohmann::ordered_json(format_date(*r.var->horizon_date))
                                                           : nlohmann::ordered_json(nullptr)},
                      {"log_quantile", r.var->log_quantile},
                      {"price_quantile", r.var->price_quantile}};
    }
    out["partial"] = r.partial;
    out["seed"] = r.seed;
    return out;
}

std::string series_to_csv(const ExperimentReport& report) {
    std::string out = "date,split,actual_log,base_log,deviation,correction,corrected_log\n";
    for (const auto& r : report.rows) {
        out += format_date(r.date);
        out += r.test ? ",test," : ",train,";
        out += format_double(r.actual_log) + "," + format_double(r.base_log) + "," + format_double(r.deviation) + ",";
        if (r.correction) out += format_double(*r.correction);
        out += ",";
        if (r.corrected_log) out += format_double(*r.corrected_log);
        out += "\n";
    }
    return out;
}

}  // namespace pivotreg
