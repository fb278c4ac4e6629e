#include "pivotreg/cli.hpp"

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pivotreg/bayes.hpp"
#include "pivotreg/correction.hpp"
#include "pivotreg/error.hpp"
#include "pivotreg/eval.hpp"
#include "pivotreg/ingest.hpp"
#include "pivotreg/options.hpp"
#include "pivotreg/service.hpp"

namespace pivotreg {

namespace {

using nlohmann::json;

struct Flags {
    std::string config;
    std::string data;
    std::optional<std::string> target;
    std::optional<std::string> features;
    std::optional<std::string> align;
    std::optional<int> max_gap;
    std::string out;

    std::optional<double> lambda;
    std::optional<std::string> lambda_grid;
    std::optional<int> folds;
    std::optional<int> max_iter;
    std::optional<double> tol;
    std::optional<std::string> split;

    std::optional<std::uint64_t> seed;
    std::optional<int> chains;
    std::optional<int> samples;
    std::optional<int> warmup;
    std::optional<double> var_level;
    std::optional<int> predictive_draws;
    bool fast = false;

    std::string pivots;
    std::string series_out;
    std::string summary_out;
    std::string suggest_out;
    int window = 5;

    // ingest
    std::string base_url;
    std::string client_config;
    std::optional<double> timeout;
    std::string metrics;
    std::string from;
    std::string to;
    std::vector<std::string> imports;

    // serve
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string cors_origin = "*";
    std::string snapshot;
    double time_budget = 120.0;
};

void add_data_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON file supplying any flag; explicit flags win");
    sub->add_option("--data", f.data, "Directory with one <series>.csv per column")->required();
    sub->add_option("--target", f.target, "Target column (default price)");
    sub->add_option("--features", f.features, "Ordered comma-separated regressors");
    sub->add_option("--align", f.align, "intersect | ffill")->check(CLI::IsMember({"intersect", "ffill"}));
    sub->add_option("--max-gap", f.max_gap, "Forward-fill limit in days (default 3)")->check(CLI::NonNegativeNumber);
}

void add_model_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--lambda", f.lambda, "Fixed Lasso penalty")->check(CLI::NonNegativeNumber);
    sub->add_option("--lambda-grid", f.lambda_grid, "Comma-separated penalties chosen by time-series CV");
    sub->add_option("--folds", f.folds, "Forward-chaining folds for --lambda-grid")->check(CLI::Range(2, 1000));
    sub->add_option("--max-iter", f.max_iter, "Coordinate-descent sweep limit")->check(CLI::PositiveNumber);
    sub->add_option("--tol", f.tol, "Coordinate-descent tolerance")->check(CLI::PositiveNumber);
    sub->add_option("--split", f.split, "Train/test boundary date YYYY-MM-DD");
}

void add_bayes_flags(CLI::App* sub, Flags& f) {
    sub->add_option("--seed", f.seed, "Master random seed (default 0)");
    sub->add_option("--chains", f.chains, "MCMC chains")->check(CLI::Range(2, 64));
    sub->add_option("--samples", f.samples, "Post-warmup draws per chain")->check(CLI::Range(100, 10'000'000));
    sub->add_option("--warmup", f.warmup, "Warmup iterations per chain")->check(CLI::NonNegativeNumber);
    sub->add_option("--var-level", f.var_level, "VaR level in (0,1)")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--predictive-draws", f.predictive_draws, "Predictive draws for VaR")->check(CLI::PositiveNumber);
}

json options_json(const Flags& f) {
    json j = json::object();
    if (f.target) j["target"] = *f.target;
    if (f.features) j["features"] = *f.features;
    if (f.align) j["align"] = *f.align;
    if (f.max_gap) j["max_gap"] = *f.max_gap;
    if (f.lambda) j["lambda"] = *f.lambda;
    if (f.lambda_grid) j["lambda_grid"] = *f.lambda_grid;
    if (f.folds) j["folds"] = *f.folds;
    if (f.max_iter) j["max_iter"] = *f.max_iter;
    if (f.tol) j["tol"] = *f.tol;
    if (f.split) j["split"] = *f.split;
    if (f.seed) j["seed"] = *f.seed;
    if (f.chains) j["chains"] = *f.chains;
    if (f.samples) j["samples"] = *f.samples;
    if (f.warmup) j["warmup"] = *f.warmup;
    if (f.var_level) j["var_level"] = *f.var_level;
    if (f.predictive_draws) j["predictive_draws"] = *f.predictive_draws;
    if (f.fast) j["fast"] = true;
    return j;
}

Dataset load_data(const Flags& f, const json& opts) {
    const DataSelection sel = selection_from_json(opts);
    return load_dataset_dir(f.data, sel.target, sel.features, sel.align);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw NotFoundError("cannot write " + path);
    out << text;
}

std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

// Appends `--key value` pairs from the --config JSON for flags the user did
// not pass explicitly and that the chosen subcommand understands.
std::vector<std::string> with_config(const std::vector<std::string>& args, CLI::App& app) {
    if (args.empty()) return args;
    std::string config_path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
        if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
    }
    if (config_path.empty()) return args;
    CLI::App* sub = nullptr;
    try {
        sub = app.get_subcommand(args.front());
    } catch (const CLI::OptionNotFound&) {
        return args;
    }
    std::ifstream in(config_path);
    if (!in) throw NotFoundError("cannot open config file " + config_path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::exception& e) {
        throw ValidationError("config file " + config_path + ": " + e.what());
    }
    if (!cfg.is_object()) throw ValidationError("config file must hold a JSON object");

    auto present = [&](const std::string& flag) {
        for (const auto& a : args) {
            if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
        }
        return false;
    };
    std::vector<std::string> out = args;
    for (const auto& [key, value] : cfg.items()) {
        std::string flag = "--" + key;
        std::replace(flag.begin(), flag.end(), '_', '-');
        if (flag == "--config" || present(flag)) continue;
        if (sub->get_option_no_throw(flag) == nullptr) continue;
        if (value.is_boolean()) {
            if (value.get<bool>()) out.push_back(flag);
            continue;
        }
        std::string text;
        if (value.is_string()) {
            text = value.get<std::string>();
        } else if (value.is_array()) {
            for (const auto& v : value) text += (text.empty() ? "" : ",") + (v.is_string() ? v.get<std::string>() : v.dump());
        } else {
            text = value.dump();
        }
        out.push_back(flag);
        out.push_back(text);
    }
    return out;
}

int cmd_ingest(const Flags& f, std::ostream& out) {
    StatClientConfig client;
    if (!f.client_config.empty()) client = StatClientConfig::from_json_file(f.client_config);
    client = client.with_env_overrides();
    if (!f.data.empty()) client.fixture_dir = f.data;
    if (!f.base_url.empty()) {
        client.base_url = f.base_url;
        if (f.data.empty()) client.fixture_dir.clear();
    }
    if (f.timeout) client.timeout_seconds = *f.timeout;

    std::optional<DateRange> range;
    if (!f.from.empty() || !f.to.empty()) {
        if (f.from.empty() || f.to.empty()) throw UsageError("--from and --to must be given together");
        range = DateRange{parse_date(f.from), parse_date(f.to)};
    }
    std::vector<std::string> metrics;
    if (f.metrics.empty()) {
        for (auto m : all_chain_metrics()) metrics.emplace_back(metric_endpoint_name(m));
    } else {
        metrics = parse_name_list(f.metrics, "metrics");
    }

    std::filesystem::create_directories(f.out);
    // Fetch everything first so a failure leaves no partial output behind.
    std::vector<TimeSeries> fetched;
    for (const auto& m : metrics) fetched.push_back(fetch_chain_stat(m, range, client));

    std::vector<std::pair<std::string, std::string>> imports;
    for (const auto& spec : f.imports) {
        auto eq = spec.find('=');
        if (eq == std::string::npos) throw UsageError("--import expects name=path, got '" + spec + "'");
        imports.emplace_back(spec.substr(0, eq), spec.substr(eq + 1));
    }
    if (client.fixture_mode()) {
        for (const char* name : {"gtrend", "wiki_cryptocurrency"}) {
            auto p = std::filesystem::path(client.fixture_dir) / (std::string(name) + ".csv");
            bool listed = std::any_of(imports.begin(), imports.end(), [&](const auto& i) { return i.first == name; });
            if (!listed && std::filesystem::exists(p)) imports.emplace_back(name, p.string());
        }
    }
    for (const auto& [name, path] : imports) {
        auto s = load_series(path, name);
        if (range) {
            std::vector<Point> kept;
            for (const auto& p : s.points()) {
                if (range->contains(p.date)) kept.push_back(p);
            }
            s = TimeSeries(name, std::move(kept));
        }
        fetched.push_back(std::move(s));
    }
    for (const auto& s : fetched) {
        write_series(std::filesystem::path(f.out) / (s.name() + ".csv"), s);
        out << s.name() << ": " << s.size() << " points\n";
    }
    return 0;
}

int cmd_fit(const Flags& f, std::ostream& out) {
    const json opts_json = options_json(f);
    ExperimentOptions opts = options_from_json(opts_json);
    const Dataset dataset = load_data(f, opts_json);
    Dataset train = dataset;
    std::optional<Dataset> test;
    if (opts.split) {
        auto parts = time_split(dataset, *opts.split);
        train = std::move(parts.first);
        test = std::move(parts.second);
    }
    const DesignMatrix design = build_design(train, opts.features);
    LassoConfig cfg = opts.lasso;
    cfg.lambda = opts.lambda ? *opts.lambda : select_lambda(design, opts.lambda_grid, opts.n_folds, opts.lasso);
    const LassoFit fit = fit_lasso(design, cfg);

    nlohmann::ordered_json j;
    j["target"] = dataset.target_name;
    j["n_train"] = train.size();
    j["split"] = opts.split ? nlohmann::ordered_json(format_date(*opts.split)) : nlohmann::ordered_json(nullptr);
    j["fit"] = fit_to_json(fit_table(fit));
    auto scales = nlohmann::ordered_json::array();
    for (const auto& s : design.scales) scales.push_back({{"column", s.column}, {"mean", s.mean}, {"std", s.std}});
    j["scales"] = std::move(scales);
    const Eigen::VectorXd pred = predict(fit, design);
    j["rmse_in_sample"] = rmse_price({pred.data(), static_cast<std::size_t>(pred.size())},
                                     {design.y.data(), static_cast<std::size_t>(design.y.size())});
    if (test) {
        const DesignMatrix td = apply_design(*test, opts.features, design.scales);
        const Eigen::VectorXd tp = predict(fit, td);
        j["n_test"] = test->size();
        j["rmse_test"] = rmse_price({tp.data(), static_cast<std::size_t>(tp.size())},
                                    {td.y.data(), static_cast<std::size_t>(td.y.size())});
    }
    write_text(f.out, dump(j));
    out << "wrote " << f.out << "\n";
    return 0;
}

int cmd_report(const Flags& f, bool bayes, std::ostream& out) {
    json opts_json = options_json(f);
    if (!bayes) opts_json["fast"] = true;
    const ExperimentOptions opts = options_from_json(opts_json);
    const Dataset dataset = load_data(f, opts_json);
    std::optional<PivotSet> pivots;
    if (!f.pivots.empty()) pivots = load_pivots(f.pivots);
    const ExperimentReport report = run_experiment(dataset, pivots, opts);
    write_text(f.out, dump(report_to_json(report)));
    if (!f.series_out.empty()) write_text(f.series_out, series_to_csv(report));
    if (!f.suggest_out.empty()) {
        std::vector<Point> train_dev;
        for (const auto& r : report.rows) {
            if (!r.test) train_dev.push_back({r.date, r.deviation});
        }
        write_pivots(f.suggest_out, suggest_pivots(TimeSeries("deviation", std::move(train_dev)), f.window));
    }
    out << "rmse_base=" << report.rmse_base;
    if (report.rmse_corrected) out << " rmse_corrected=" << *report.rmse_corrected;
    out << " (" << report.rmse_mode << ")\nwrote " << f.out << "\n";
    return 0;
}

int cmd_bayes(const Flags& f, std::ostream& out) {
    const json opts_json = options_json(f);
    const ExperimentOptions opts = options_from_json(opts_json);
    const Dataset dataset = load_data(f, opts_json);
    Dataset train = dataset;
    if (opts.split) train = time_split(dataset, *opts.split).first;
    DesignMatrix design = build_design(train, opts.features);
    if (!f.pivots.empty()) {
        const PivotSet pivots = load_pivots(f.pivots);
        if (pivots.empty()) throw ValidationError("pivot file is empty");
        for (const auto& p : pivots.pivots()) {
            if (p.date < train.dates.front() || p.date > train.dates.back()) {
                throw ValidationError("pivot " + format_date(p.date) + " lies outside the fitting window");
            }
        }
        design = augment_design(design, interpolate_correction(pivots, design.dates));
    }
    const PosteriorChains chains = sample_posterior(design, opts.priors, opts.mcmc);
    write_chains_csv(f.out, chains);

    nlohmann::ordered_json summary;
    summary["seed"] = opts.mcmc.seed;
    auto params = nlohmann::ordered_json::array();
    for (const auto& s : summarize(chains)) {
        params.push_back({{"name", s.name}, {"median", s.median}, {"q25", s.q25}, {"q75", s.q75},
                          {"whisker_low", s.whisker_low}, {"whisker_high", s.whisker_high}});
    }
    summary["params"] = std::move(params);
    auto diag = nlohmann::ordered_json::array();
    for (const auto& d : diagnostics(chains)) {
        diag.push_back({{"name", d.name},
                        {"rhat", std::isfinite(d.rhat) ? nlohmann::ordered_json(d.rhat) : nlohmann::ordered_json(nullptr)},
                        {"ess", d.ess}});
    }
    summary["diagnostics"] = std::move(diag);
    const Eigen::RowVectorXd row = design.x.row(design.rows() - 1);
    const auto draws = posterior_predictive(chains, {row.data(), static_cast<std::size_t>(row.size())},
                                            opts.predictive_draws, opts.mcmc.seed + 1);
    const auto var = value_at_risk(draws, opts.var_level, design.dates.back());
    summary["var"] = {{"level", var.level}, {"horizon_date", format_date(*var.horizon_date)},
                      {"log_quantile", var.log_quantile}, {"price_quantile", var.price_quantile}};
    if (!f.summary_out.empty()) {
        write_text(f.summary_out, dump(summary));
    } else {
        out << dump(summary);
    }
    return 0;
}

int cmd_serve(const Flags& f) {
    ServiceConfig cfg;
    cfg.data_root = f.data;
    cfg.host = f.host;
    cfg.port = f.port;
    cfg.cors_origin = f.cors_origin;
    if (!f.snapshot.empty()) cfg.snapshot = f.snapshot;
    cfg.time_budget_seconds = f.time_budget;
    return serve(cfg);
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Lasso regression with expert pivot correction and robust Bayesian uncertainty", "pivotreg"};
    app.require_subcommand(1);
    Flags f;

    auto* ingest = app.add_subcommand("ingest", "Fetch chain statistics (live or fixtures) into per-series CSVs");
    ingest->add_option("--config", f.config, "JSON file supplying any flag");
    ingest->add_option("--data", f.data, "Fixture directory (<metric>.csv files)");
    ingest->add_option("--base-url", f.base_url, "Live statistics endpoint");
    ingest->add_option("--client-config", f.client_config, "JSON client config (base_url, timeout_seconds, fixture_dir)");
    ingest->add_option("--timeout", f.timeout, "HTTP timeout in seconds")->check(CLI::PositiveNumber);
    ingest->add_option("--metrics", f.metrics, "Comma-separated metrics (default all)");
    ingest->add_option("--from", f.from, "First date YYYY-MM-DD");
    ingest->add_option("--to", f.to, "Last date YYYY-MM-DD");
    ingest->add_option("--import", f.imports, "Extra CSV series as name=path (repeatable)");
    ingest->add_option("--out", f.out, "Output directory")->required();

    auto* fit = app.add_subcommand("fit", "Fit the Lasso model");
    add_data_flags(fit, f);
    add_model_flags(fit, f);
    fit->add_option("--out", f.out, "Fit JSON path")->required();

    auto* correct = app.add_subcommand("correct", "Refit with an expert correction term from a pivot file");
    add_data_flags(correct, f);
    add_model_flags(correct, f);
    correct->add_option("--pivots", f.pivots, "Pivot JSON file")->required();
    correct->add_option("--out", f.out, "Report JSON path")->required();
    correct->add_option("--series-out", f.series_out, "Per-date CSV for plotting");
    correct->add_option("--suggest-out", f.suggest_out, "Write suggested pivots (local extrema) here");
    correct->add_option("--window", f.window, "Half-width for suggested pivots")->check(CLI::PositiveNumber);

    auto* bayes = app.add_subcommand("bayes", "Sample the Student-t posterior and export chains");
    add_data_flags(bayes, f);
    add_model_flags(bayes, f);
    add_bayes_flags(bayes, f);
    bayes->add_option("--pivots", f.pivots, "Pivot JSON file adding the expert column");
    bayes->add_option("--out", f.out, "Chains CSV path")->required();
    bayes->add_option("--summary-out", f.summary_out, "Summary JSON path (default stdout)");

    auto* report = app.add_subcommand("report", "Full pipeline: base fit, correction, Bayesian fits, VaR");
    add_data_flags(report, f);
    add_model_flags(report, f);
    add_bayes_flags(report, f);
    report->add_option("--pivots", f.pivots, "Pivot JSON file");
    report->add_option("--out", f.out, "Report JSON path")->required();
    report->add_option("--series-out", f.series_out, "Per-date CSV for plotting");
    report->add_option("--suggest-out", f.suggest_out, "Write suggested pivots here");
    report->add_option("--window", f.window, "Half-width for suggested pivots")->check(CLI::PositiveNumber);
    report->add_flag("--fast", f.fast, "Skip the Bayesian stage");

    auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP session service");
    serve_cmd->add_option("--config", f.config, "JSON file supplying any flag");
    serve_cmd->add_option("--data", f.data, "Data root; each subdirectory is a dataset")->required();
    serve_cmd->add_option("--host", f.host, "Bind address")->envname("PIVOTREG_HOST");
    serve_cmd->add_option("--port", f.port, "Bind port")->envname("PIVOTREG_PORT")->check(CLI::Range(0, 65535));
    serve_cmd->add_option("--cors-origin", f.cors_origin, "Allowed CORS origin");
    serve_cmd->add_option("--snapshot", f.snapshot, "Session snapshot file");
    serve_cmd->add_option("--time-budget", f.time_budget, "Refit time budget in seconds")->check(CLI::PositiveNumber);

    try {
        std::vector<std::string> full = with_config(args, app);
        std::vector<std::string> reversed(full.rbegin(), full.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        err << app.help() << std::flush;
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << std::endl;
        return 1;
    }

    try {
        if (*ingest) return cmd_ingest(f, out);
        if (*fit) return cmd_fit(f, out);
        if (*correct) return cmd_report(f, false, out);
        if (*bayes) return cmd_bayes(f, out);
        if (*report) return cmd_report(f, true, out);
        if (*serve_cmd) return cmd_serve(f);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << std::endl;
        return 2;
    } catch (const StageError& e) {
        err << "error: " << e.what() << std::endl;
        return e.cause_is<UsageError>() ? 2 : 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << std::endl;
        return 1;
    }
    return 2;
}

int run_cli(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace pivotreg
