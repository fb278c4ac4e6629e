// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "pivotreg/bayes.hpp"
#include "pivotreg/cli.hpp"
#include "pivotreg/correction.hpp"
#include "pivotreg/eval.hpp"
#include "pivotreg/ingest.hpp"
#include "pivotreg/lasso.hpp"
#include "pivotreg/preprocess.hpp"
#include "pivotreg/quantile.hpp"
#include "pivotreg/service.hpp"
#include "pivotreg/synthetic.hpp"

// After the Eigen-based headers: httplib pulls in <resolv.h>, whose `_res`
// macro collides with Eigen parameter names.
#include <httplib.h>

using namespace pivotreg;
using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

namespace {

// Tolerances and budgets.
constexpr double kOracleTol = 1e-8;
constexpr double kOracleRuntime = 1.0;
constexpr double kGridTol = 2e-3;
constexpr double kGridStep = 1e-3;
constexpr double kGridRuntime = 30.0;
constexpr double kKktSlackFactor = 10.0;
constexpr double kCorrectionRatio = 0.8;
constexpr double kHarnessRuntime = 10.0;
constexpr int kReplications = 10;
constexpr int kRecoveryNeeded = 8;
constexpr double kRhatMax = 1.05;
constexpr double kRecoveryRuntime = 300.0;
constexpr int kRobustNeeded = 9;
constexpr double kOutlierFraction = 0.05;
constexpr double kContaminationSe = 3.0;
constexpr int kNarrowNeeded = 10;
constexpr int kVarDraws = 100'000;
constexpr double kVarLow = -1.70;
constexpr double kVarHigh = -1.60;

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
    std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
    if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

// Every converged Lasso fit made anywhere in the suite is checked here.
struct KktLedger {
    int fits = 0;
    int failed = 0;
    double worst = 0.0;

    void add(const LassoFit& fit, const DesignMatrix& d, const LassoConfig& cfg) {
        if (!fit.converged) return;
        ++fits;
        auto k = check_kkt(fit, d, kKktSlackFactor * cfg.tol);
        worst = std::max(worst, k.max_violation);
        if (!k.ok) ++failed;
    }
} kkt;

LassoFit checked_fit(const DesignMatrix& d, const LassoConfig& cfg) {
    auto fit = fit_lasso(d, cfg);
    kkt.add(fit, d, cfg);
    return fit;
}

DesignMatrix design_of(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    DesignMatrix d;
    d.x = x;
    d.y = y;
    const Date start{std::chrono::year{2017} / 1 / 1};
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        d.feature_names.push_back("x" + std::to_string(j));
        d.scales.push_back({d.feature_names.back(), 0.0, 1.0});
    }
    for (Eigen::Index i = 0; i < x.rows(); ++i) d.dates.push_back(std::chrono::sys_days(start) + std::chrono::days(i));
    return d;
}

// Standardized random columns and a noisy linear response.
DesignMatrix random_problem(std::mt19937_64& rng, int n, int p) {
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    Eigen::MatrixXd x(n, p);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < p; ++j) x(i, j) = n01(rng);
    for (int j = 0; j < p; ++j) {
        const double m = x.col(j).mean();
        x.col(j).array() -= m;
        x.col(j) /= std::sqrt(x.col(j).squaredNorm() / double(n - 1));
    }
    Eigen::VectorXd beta(p);
    for (auto& b : beta) b = coef(rng);
    const double alpha = coef(rng);
    Eigen::VectorXd y = x * beta;
    for (int i = 0; i < n; ++i) y[i] += alpha + 0.4 * n01(rng);
    return design_of(x, y);
}

// Least squares with intercept from the normal equations, solved by Cramer's
// rule on the centered 2x2 system.
std::array<double, 3> ols_two(const DesignMatrix& d) {
    const double n = double(d.rows());
    const double m0 = d.x.col(0).mean(), m1 = d.x.col(1).mean(), my = d.y.mean();
    double s00 = 0, s01 = 0, s11 = 0, s0y = 0, s1y = 0;
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        const double a = d.x(i, 0) - m0, b = d.x(i, 1) - m1, c = d.y[i] - my;
        s00 += a * a, s01 += a * b, s11 += b * b, s0y += a * c, s1y += b * c;
    }
    (void)n;
    const double det = s00 * s11 - s01 * s01;
    const double b0 = (s0y * s11 - s01 * s1y) / det;
    const double b1 = (s00 * s1y - s01 * s0y) / det;
    return {my - b0 * m0 - b1 * m1, b0, b1};
}

void lasso_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(20240101);
    double worst = 0.0;
    bool zeros = true;
    for (int trial = 0; trial < 20; ++trial) {
        auto d = random_problem(rng, 10, 2);
        const LassoConfig exact{0.0, 100000, 1e-12};
        auto fit = checked_fit(d, exact);
        const auto o = ols_two(d);
        worst = std::max({worst, std::abs(fit.intercept - o[0]), std::abs(fit.coefficients[0] - o[1]),
                          std::abs(fit.coefficients[1] - o[2])});
        if (!fit.converged) worst = INFINITY;

        double threshold = 0.0;
        for (Eigen::Index j = 0; j < d.cols(); ++j) {
            threshold = std::max(threshold, std::abs(d.x.col(j).dot(d.y)) / double(d.rows()));
        }
        for (double scale : {1.0 + 1e-9, 1.5, 10.0}) {
            const LassoConfig cfg{threshold * scale};
            auto z = checked_fit(d, cfg);
            zeros = zeros && z.coefficients.isZero(0.0);
        }
    }
    const double t = seconds_since(t0);
    report("lasso oracle", worst <= kOracleTol && zeros && t < kOracleRuntime,
           "max |beta - ols| " + fmt(worst) + ", all-zero above threshold " + (zeros ? "yes" : "no") + ", " +
               fmt(t) + " s");
}

void lasso_grid() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(77);
    double worst = 0.0;
    const double lambda = 0.1;
    for (int trial = 0; trial < 5; ++trial) {
        auto d = random_problem(rng, 5, 2);
        const LassoConfig cfg{lambda};
        auto fit = checked_fit(d, cfg);

        // Intercept profiled out: objective in centered second moments.
        const double n = double(d.rows());
        Eigen::MatrixXd xc = d.x.rowwise() - d.x.colwise().mean();
        Eigen::VectorXd yc = d.y.array() - d.y.mean();
        const double g00 = xc.col(0).squaredNorm(), g01 = xc.col(0).dot(xc.col(1)), g11 = xc.col(1).squaredNorm();
        const double c0 = xc.col(0).dot(yc), c1 = xc.col(1).dot(yc), yy = yc.squaredNorm();
        const int reach = 4000;
        double best = INFINITY, bb0 = 0, bb1 = 0;
        for (int i = -reach; i <= reach; ++i) {
            const double b0 = i * kGridStep;
            for (int k = -reach; k <= reach; ++k) {
                const double b1 = k * kGridStep;
                const double rss = yy - 2 * (b0 * c0 + b1 * c1) + b0 * b0 * g00 + 2 * b0 * b1 * g01 + b1 * b1 * g11;
                const double obj = rss / (2 * n) + lambda * (std::abs(b0) + std::abs(b1));
                if (obj < best) best = obj, bb0 = b0, bb1 = b1;
            }
        }
        worst = std::max({worst, std::abs(fit.coefficients[0] - bb0), std::abs(fit.coefficients[1] - bb1)});
    }
    const double t = seconds_since(t0);
    report("lasso grid search", worst <= kGridTol && t < kGridRuntime,
           "max |beta - grid| " + fmt(worst) + ", " + fmt(t) + " s");
}

SyntheticData harness(std::uint64_t seed, double outliers = 0.0) {
    SyntheticSpec spec;
    spec.n_days = 500;
    spec.n_pivots = 6;
    spec.pivot_amplitude = 0.3;
    spec.noise_nu = 4.0;
    spec.noise_sigma = 0.1;
    spec.outlier_fraction = outliers;
    spec.seed = seed;
    return make_synthetic(spec);
}

void correction_harness() {
    const auto t0 = Clock::now();
    ExperimentOptions opts;
    opts.run_bayes = false;
    int improved = 0;
    double worst_ratio = 0.0;
    bool omitted = true;
    for (int rep = 0; rep < kReplications; ++rep) {
        auto data = harness(1000 + std::uint64_t(rep));
        auto r = run_experiment(data.dataset, data.oracle_pivots, opts);
        if (r.rmse_corrected) {
            const double ratio = *r.rmse_corrected / r.rmse_base;
            worst_ratio = std::max(worst_ratio, ratio);
            if (ratio <= kCorrectionRatio) ++improved;
        } else {
            worst_ratio = INFINITY;
        }
        auto none = run_experiment(data.dataset, std::nullopt, opts);
        auto j = report_to_json(none);
        omitted = omitted && !none.rmse_corrected && !j.contains("rmse_corrected") && !j.contains("corrected_fit");

        // The fits behind the report, for the stationarity check.
        const LassoConfig cfg{r.lambda};
        auto base = build_design(data.dataset, data.features);
        checked_fit(base, cfg);
        checked_fit(augment_design(base, interpolate_correction(data.oracle_pivots, base.dates)), cfg);
    }
    const double t = seconds_since(t0);
    report("expert correction", improved == kReplications && omitted && t < kHarnessRuntime,
           std::to_string(improved) + "/" + std::to_string(kReplications) + " with rmse ratio <= 0.8 (worst " +
               fmt(worst_ratio) + "), no-pivot branch omitted " + (omitted ? "yes" : "no") + ", " + fmt(t) + " s");
}

std::vector<double> truth_with_expert(const SyntheticData& d) {
    std::vector<double> t{d.alpha_with_expert};
    t.insert(t.end(), d.betas.begin(), d.betas.end());
    t.push_back(d.beta_expert);
    t.push_back(d.sigma);
    t.push_back(d.nu);
    return t;
}

DesignMatrix augmented(const SyntheticData& d) {
    auto base = build_design(d.dataset, d.features);
    return augment_design(base, interpolate_correction(d.oracle_pivots, base.dates));
}

McmcConfig full_mcmc(int rep) {
    McmcConfig cfg;
    cfg.n_chains = 4;
    cfg.n_samples = 2000;
    cfg.n_warmup = 1000;
    cfg.seed = 2000 + std::uint64_t(rep);
    return cfg;
}

void bayes_criteria() {
    const auto t0 = Clock::now();
    int covered = 0, rhat_ok = 0, narrowed = 0;
    double worst_rhat = 0.0;
    std::vector<int> per_param;
    std::vector<std::string> names;
    for (int rep = 0; rep < kReplications; ++rep) {
        auto data = harness(1000 + std::uint64_t(rep));
        auto base = build_design(data.dataset, data.features);
        auto aug = augment_design(base, interpolate_correction(data.oracle_pivots, base.dates));
        const auto cfg = full_mcmc(rep);
        auto with = sample_posterior(aug, PriorSpec{}, cfg);
        const auto truth = truth_with_expert(data);
        if (names.empty()) {
            names = with.parameter_names();
            per_param.assign(names.size(), 0);
        }
        bool all = true, rh = true;
        const auto diag = diagnostics(with);
        for (std::size_t k = 0; k < with.n_params(); ++k) {
            auto v = with.pooled(k);
            std::sort(v.begin(), v.end());
            const bool in = truth[k] >= quantile_sorted(v, 0.05) && truth[k] <= quantile_sorted(v, 0.95);
            per_param[k] += in;
            all = all && in;
            rh = rh && diag[k].rhat < kRhatMax;
            worst_rhat = std::max(worst_rhat, std::isnan(diag[k].rhat) ? INFINITY : diag[k].rhat);
        }
        covered += all;
        rhat_ok += rh;

        auto without = sample_posterior(base, PriorSpec{}, cfg);
        const double s_with = quantile(with.pooled(with.index_of("sigma")), 0.5);
        const double s_without = quantile(without.pooled(without.index_of("sigma")), 0.5);
        narrowed += s_with < s_without;
    }
    const double t = seconds_since(t0);
    std::ostringstream per;
    for (std::size_t k = 0; k < names.size(); ++k) per << (k ? " " : "") << names[k] << "=" << per_param[k];
    report("bayesian recovery",
           covered >= kRecoveryNeeded && rhat_ok == kReplications && t < kRecoveryRuntime,
           std::to_string(covered) + "/" + std::to_string(kReplications) +
               " replications with every parameter inside its 90% interval, r-hat < 1.05 in " +
               std::to_string(rhat_ok) + "/" + std::to_string(kReplications) + " (worst " + fmt(worst_rhat) + "), " +
               fmt(t) + " s; per-parameter coverage " + per.str());
    report("sigma narrowing", narrowed >= kNarrowNeeded,
           std::to_string(narrowed) + "/" + std::to_string(kReplications) +
               " replications with a smaller posterior median sigma once the expert column is added");
}

// A coefficient counts as contaminated when the outliers move its least
// squares estimate by more than three clean standard errors.
void robustness() {
    int robust = 0;
    int contaminated_total = 0;
    for (int rep = 0; rep < kReplications; ++rep) {
        auto clean = harness(1000 + std::uint64_t(rep));
        auto dirty = harness(1000 + std::uint64_t(rep), kOutlierFraction);
        auto clean_d = augmented(clean);
        auto dirty_d = augmented(dirty);

        const LassoConfig ols{0.0};
        auto clean_ls = checked_fit(clean_d, ols);
        auto dirty_ls = checked_fit(dirty_d, ols);

        const Eigen::Index p = clean_d.cols() + 1;
        Eigen::MatrixXd x(clean_d.rows(), p);
        x.col(0).setOnes();
        x.rightCols(clean_d.cols()) = clean_d.x;
        Eigen::VectorXd b(p);
        b[0] = clean_ls.intercept;
        b.tail(clean_d.cols()) = clean_ls.coefficients;
        const Eigen::VectorXd r = clean_d.y - x * b;
        const double s2 = r.squaredNorm() / double(x.rows() - p);
        const Eigen::VectorXd se = ((x.transpose() * x).inverse().diagonal() * s2).cwiseSqrt();

        auto post = sample_posterior(dirty_d, PriorSpec{}, full_mcmc(rep));
        const auto truth = truth_with_expert(dirty);
        bool ok = true;
        for (Eigen::Index k = 0; k < p; ++k) {
            const double ls_clean = k == 0 ? clean_ls.intercept : clean_ls.coefficients[k - 1];
            const double ls_dirty = k == 0 ? dirty_ls.intercept : dirty_ls.coefficients[k - 1];
            if (std::abs(ls_dirty - ls_clean) <= kContaminationSe * se[k]) continue;
            ++contaminated_total;
            const double med = quantile(post.pooled(std::size_t(k)), 0.5);
            ok = ok && std::abs(med - truth[std::size_t(k)]) < std::abs(ls_dirty - truth[std::size_t(k)]);
        }
        robust += ok;
    }
    report("robustness", robust >= kRobustNeeded,
           std::to_string(robust) + "/" + std::to_string(kReplications) +
               " replications where the posterior median beats least squares on every contaminated coefficient (" +
               std::to_string(contaminated_total) + " contaminated coefficients in total)");
}

void var_sanity() {
    const std::vector<std::string> names{"alpha", "beta_x0", "sigma", "nu"};
    const std::vector<double> point{0.0, 0.0, 1.0, 1e6};
    std::vector<double> draws;
    for (int i = 0; i < 2 * 100; ++i) draws.insert(draws.end(), point.begin(), point.end());
    PosteriorChains chains(names, 2, 100, draws, 0);
    const std::vector<double> row{0.0};
    const auto pred = posterior_predictive(chains, row, kVarDraws, 99);
    const double q05 = value_at_risk(pred, 0.05).log_quantile;
    bool monotone = true;
    double prev = -INFINITY;
    std::ostringstream levels;
    for (double level : {0.01, 0.05, 0.1, 0.5}) {
        const double q = value_at_risk(pred, level).log_quantile;
        levels << " " << level << ":" << fmt(q);
        monotone = monotone && q > prev;
        prev = q;
    }
    report("value at risk", q05 >= kVarLow && q05 <= kVarHigh && monotone,
           "5% log-quantile " + fmt(q05) + ", levels" + levels.str());
}

void write_dataset(const std::filesystem::path& dir, const Dataset& ds) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, values] : ds.columns) {
        std::vector<Point> pts;
        for (std::size_t i = 0; i < values.size(); ++i) pts.push_back({ds.dates[i], values[i]});
        write_series(dir / (name + ".csv"), TimeSeries(name, pts));
    }
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

struct Workspace {
    std::filesystem::path root;
    SyntheticData data;

    Workspace() {
        root = std::filesystem::temp_directory_path() /
               ("pivotreg-acceptance-" + std::to_string(::getpid()));
        std::filesystem::remove_all(root);
        SyntheticSpec spec;
        spec.n_days = 200;
        spec.seed = 31;
        data = make_synthetic(spec);
        write_dataset(root / "fixture", data.dataset);
        write_pivots(root / "pivots.json", data.oracle_pivots);
    }
    ~Workspace() { std::filesystem::remove_all(root); }

    std::vector<std::string> report_flags() const {
        return {"--data",   (root / "fixture").string(), "--pivots", (root / "pivots.json").string(),
                "--lambda", "0.001", "--chains", "2", "--samples", "300", "--warmup", "200", "--seed", "17",
                "--predictive-draws", "1000"};
    }
};

void determinism(const Workspace& ws) {
    auto run = [&](const std::string& tag) {
        std::string cmd = std::string(PIVOTREG_CLI_PATH) + " report";
        for (const auto& f : ws.report_flags()) cmd += " '" + f + "'";
        cmd += " --out '" + (ws.root / (tag + ".json")).string() + "' --series-out '" +
               (ws.root / (tag + ".csv")).string() + "' >/dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    };
    const int a = run("first"), b = run("second");
    const bool same_json = slurp(ws.root / "first.json") == slurp(ws.root / "second.json");
    const bool same_csv = slurp(ws.root / "first.csv") == slurp(ws.root / "second.csv");
    const bool nonempty = !slurp(ws.root / "first.json").empty();
    report("determinism", a == 0 && b == 0 && same_json && same_csv && nonempty,
           "exit codes " + std::to_string(a) + "," + std::to_string(b) + ", report identical " +
               (same_json ? "yes" : "no") + ", series identical " + (same_csv ? "yes" : "no"));
}

// First path at which two JSON values differ, or empty when equal.
std::string first_difference(const json& a, const json& b, const std::string& path = "") {
    if (a.type() != b.type()) return path.empty() ? "/" : path;
    if (a.is_object()) {
        for (auto it = a.begin(); it != a.end(); ++it) {
            if (!b.contains(it.key())) return path + "/" + it.key();
            auto d = first_difference(it.value(), b.at(it.key()), path + "/" + it.key());
            if (!d.empty()) return d;
        }
        for (auto it = b.begin(); it != b.end(); ++it) {
            if (!a.contains(it.key())) return path + "/" + it.key();
        }
        return {};
    }
    if (a.is_array()) {
        if (a.size() != b.size()) return path;
        for (std::size_t i = 0; i < a.size(); ++i) {
            auto d = first_difference(a[i], b[i], path + "/" + std::to_string(i));
            if (!d.empty()) return d;
        }
        return {};
    }
    return a == b ? std::string{} : (path.empty() ? "/" : path);
}

void service_equivalence(const Workspace& ws) {
    ServiceConfig cfg;
    cfg.data_root = ws.root;
    Service service(cfg);
    httplib::Server server;
    service.install(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    std::string detail;
    bool pass = false;
    {
        httplib::Client c("127.0.0.1", port);
        c.set_read_timeout(600, 0);
        auto created = c.Post("/sessions", R"({"dataset":"fixture"})", "application/json");
        if (!created || created->status != 201) {
            detail = "session creation failed";
        } else {
            const std::string id = json::parse(created->body)["id"];
            auto put = c.Put("/sessions/" + id + "/pivots",
                             json{{"expected_revision", 0}, {"pivots", pivots_to_json(ws.data.oracle_pivots)}}.dump(),
                             "application/json");
            const json opts{{"lambda", 0.001}, {"chains", 2},   {"samples", 300},
                            {"warmup", 200},   {"seed", 17},    {"predictive_draws", 1000}};
            auto refit = c.Post("/sessions/" + id + "/refit", opts.dump(), "application/json");

            std::ostringstream out, err;
            auto args = ws.report_flags();
            args.insert(args.begin(), "report");
            args.insert(args.end(), {"--out", (ws.root / "cli.json").string()});
            const int code = run_cli(args, out, err);

            if (!put || put->status != 200 || !refit || refit->status != 200) {
                detail = "refit request failed";
            } else if (code != 0) {
                detail = "cli exited with " + std::to_string(code) + ": " + err.str();
            } else {
                const auto a = json::parse(refit->body), b = json::parse(slurp(ws.root / "cli.json"));
                const auto diff = first_difference(a, b);
                pass = diff.empty();
                detail = pass ? std::to_string(a.size()) + " top-level fields equal" : "first difference at " + diff;
            }
        }
    }
    server.stop();
    thread.join();
    report("service matches cli", pass, detail);
}

}  // namespace

int main() {
    try {
        lasso_oracle();
        lasso_grid();
        correction_harness();
        bayes_criteria();
        robustness();
        var_sanity();
        {
            Workspace ws;
            determinism(ws);
            service_equivalence(ws);
        }
        report("kkt certificate", kkt.failed == 0 && kkt.fits > 0,
               std::to_string(kkt.fits - kkt.failed) + "/" + std::to_string(kkt.fits) +
                   " converged fits pass, worst violation " + fmt(kkt.worst));
    } catch (const std::exception& e) {
        std::cout << "FAIL aborted: " << e.what() << std::endl;
        return 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
    return failures == 0 ? 0 : 1;
}
