#include "pivotreg/bayes.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <future>
#include <limits>
#include <numbers>
#include <random>

#include "pivotreg/error.hpp"
#include "pivotreg/quantile.hpp"

namespace pivotreg {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// ln Gamma((nu+1)/2) - ln Gamma(nu/2) - ln(nu*pi)/2
double student_t_const(double nu) {
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
}

double t_loglik(const Eigen::VectorXd& resid, double sigma, double nu) {
    const double inv = 1.0 / (sigma * sigma * nu);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < resid.size(); ++i) acc += std::log1p(resid[i] * resid[i] * inv);
    const auto n = static_cast<double>(resid.size());
    return n * (student_t_const(nu) - std::log(sigma)) - 0.5 * (nu + 1.0) * acc;
}

double normal_prior(double b, double scale) {
    const double z = b / scale;
    return -0.5 * z * z - std::log(scale) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double half_cauchy_prior(double sigma, double scale) {
    const double z = sigma / scale;
    return std::log(2.0) - std::log(std::numbers::pi * scale) - std::log1p(z * z);
}

double shifted_gamma_prior(double nu, double shape, double rate) {
    const double x = nu - 1.0;
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

void require_finite_design(const DesignMatrix& design) {
    if (!design.x.allFinite() || !design.y.allFinite()) throw NumericError("design contains non-finite entries");
    if (design.y.size() != design.rows()) throw SchemaError("target length does not match design rows");
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

// State of one chain on the unconstrained scale: coefficients (alpha first),
// log sigma, log(nu - 1), plus the cached residual vector and log likelihood.
struct ChainState {
    Eigen::VectorXd coef;
    double log_sigma = 0.0;
    double log_nu_m1 = 0.0;
    Eigen::VectorXd resid;
    double loglik = 0.0;

    double sigma() const { return std::exp(log_sigma); }
    double nu() const { return 1.0 + std::exp(log_nu_m1); }
};

struct StartPoint {
    Eigen::VectorXd coef;
    Eigen::VectorXd coef_scale;  // rough posterior sd per coefficient
    double sigma;
};

StartPoint least_squares_start(const DesignMatrix& design) {
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    Eigen::MatrixXd a(n, p + 1);
    a.col(0).setOnes();
    a.rightCols(p) = design.x;
    StartPoint s;
    s.coef = a.colPivHouseholderQr().solve(design.y);
    Eigen::VectorXd r = design.y - a * s.coef;

    // MAD keeps the scale estimate sane when the data carry gross outliers.
    std::vector<double> abs_r(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) abs_r[static_cast<std::size_t>(i)] = std::abs(r[i]);
    double sigma = 1.4826 * quantile(abs_r, 0.5);
    if (!(sigma > 1e-8)) sigma = std::max(1e-3, std::sqrt(r.squaredNorm() / static_cast<double>(n)));
    s.sigma = sigma;

    s.coef_scale.resize(p + 1);
    s.coef_scale[0] = sigma / std::sqrt(static_cast<double>(n));
    for (Eigen::Index j = 0; j < p; ++j) {
        const double spread = (design.x.col(j).array() - design.x.col(j).mean()).matrix().norm();
        s.coef_scale[j + 1] = spread > 0 ? sigma / spread : sigma / std::sqrt(static_cast<double>(n));
    }
    return s;
}

class ChainRunner {
public:
    ChainRunner(const DesignMatrix& design, const PriorSpec& priors, const McmcConfig& config,
                const StartPoint& start, int chain,
                std::optional<std::chrono::steady_clock::time_point> deadline)
        : design_(design), priors_(priors), config_(config), deadline_(deadline) {
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed & 0xffffffffu),
                          static_cast<std::uint32_t>(config.seed >> 32), static_cast<std::uint32_t>(chain),
                          0x5eedu};
        rng_.seed(seq);

        const Eigen::Index k = start.coef.size();
        state_.coef = start.coef;
        for (Eigen::Index i = 0; i < k; ++i) state_.coef[i] += 3.0 * start.coef_scale[i] * normal_(rng_);
        state_.log_sigma = std::log(start.sigma) + 0.3 * normal_(rng_);
        state_.log_nu_m1 = std::log(4.0) + 0.5 * normal_(rng_);
        state_.resid = design.y - design.x * state_.coef.tail(k - 1);
        state_.resid.array() -= state_.coef[0];
        state_.loglik = t_loglik(state_.resid, state_.sigma(), state_.nu());
        scratch_.resize(state_.resid.size());

        log_step_.resize(static_cast<std::size_t>(k + 2));
        for (Eigen::Index i = 0; i < k; ++i) log_step_[static_cast<std::size_t>(i)] = std::log(2.4 * start.coef_scale[i]);
        log_step_[static_cast<std::size_t>(k)] = std::log(2.4 / std::sqrt(2.0 * static_cast<double>(design.rows())));
        log_step_[static_cast<std::size_t>(k + 1)] = std::log(0.5);
    }

    std::vector<double> run() {
        const std::size_t n_comp = log_step_.size();
        const std::size_t n_params = n_comp;
        std::vector<double> out(static_cast<std::size_t>(config_.n_samples) * n_params);
        std::vector<int> batch_accept(n_comp, 0);
        long warmup_accept = 0;
        constexpr int kBatch = 25;
        int batch_index = 0;

        const int total = config_.n_warmup + config_.n_samples;
        for (int it = 0; it < total; ++it) {
            if (deadline_ && (it & 63) == 0 && std::chrono::steady_clock::now() > *deadline_) {
                throw TimeoutError("sampler exceeded its time budget");
            }
            const bool warmup = it < config_.n_warmup;
            for (std::size_t c = 0; c < n_comp; ++c) {
                if (update(c)) {
                    ++batch_accept[c];
                    if (warmup) ++warmup_accept;
                }
            }
            if (warmup && (it + 1) % kBatch == 0) {
                ++batch_index;
                const double gain = std::min(1.0, 2.0 / std::sqrt(static_cast<double>(batch_index)));
                for (std::size_t c = 0; c < n_comp; ++c) {
                    const double rate = static_cast<double>(batch_accept[c]) / kBatch;
                    log_step_[c] += gain * (rate - config_.step_adapt_target);
                }
            }
            if (warmup && (it + 1) % kBatch == 0) std::fill(batch_accept.begin(), batch_accept.end(), 0);
            if (it + 1 == config_.n_warmup && warmup_accept == 0) {
                throw SamplerStuckError("every warmup proposal was rejected");
            }
            if (!warmup) {
                double* row = out.data() + static_cast<std::size_t>(it - config_.n_warmup) * n_params;
                const Eigen::Index k = state_.coef.size();
                for (Eigen::Index i = 0; i < k; ++i) row[i] = state_.coef[i];
                row[k] = state_.sigma();
                row[k + 1] = state_.nu();
            }
        }
        return out;
    }

private:
    bool accept(double log_ratio) {
        if (log_ratio >= 0.0) return true;
        return std::log(uniform_(rng_)) < log_ratio;
    }

    bool update(std::size_t c) {
        const auto k = static_cast<std::size_t>(state_.coef.size());
        const double step = std::exp(log_step_[c]) * normal_(rng_);
        const double sigma = state_.sigma();
        const double nu = state_.nu();

        if (c < k) {
            const auto idx = static_cast<Eigen::Index>(c);
            const double old_b = state_.coef[idx];
            const double new_b = old_b + step;
            if (c == 0) {
                scratch_ = state_.resid.array() - step;
            } else {
                scratch_ = state_.resid - step * design_.x.col(idx - 1);
            }
            const double ll = t_loglik(scratch_, sigma, nu);
            const double ratio = ll - state_.loglik + normal_prior(new_b, priors_.beta_scale) -
                                 normal_prior(old_b, priors_.beta_scale);
            if (std::isfinite(ll) && accept(ratio)) {
                state_.coef[idx] = new_b;
                state_.resid.swap(scratch_);
                state_.loglik = ll;
                return true;
            }
            return false;
        }
        if (c == k) {
            const double new_log = state_.log_sigma + step;
            const double new_sigma = std::exp(new_log);
            const double ll = t_loglik(state_.resid, new_sigma, nu);
            const double ratio = ll - state_.loglik + half_cauchy_prior(new_sigma, priors_.sigma_scale) -
                                 half_cauchy_prior(sigma, priors_.sigma_scale) + new_log - state_.log_sigma;
            if (new_sigma > 0.0 && std::isfinite(ll) && accept(ratio)) {
                state_.log_sigma = new_log;
                state_.loglik = ll;
                return true;
            }
            return false;
        }
        const double new_log = state_.log_nu_m1 + step;
        const double new_nu = 1.0 + std::exp(new_log);
        const double ll = t_loglik(state_.resid, sigma, new_nu);
        const double ratio = ll - state_.loglik + shifted_gamma_prior(new_nu, priors_.nu_shape, priors_.nu_rate) -
                             shifted_gamma_prior(nu, priors_.nu_shape, priors_.nu_rate) + new_log -
                             state_.log_nu_m1;
        if (new_nu > 1.0 && std::isfinite(new_nu) && std::isfinite(ll) && accept(ratio)) {
            state_.log_nu_m1 = new_log;
            state_.loglik = ll;
            return true;
        }
        return false;
    }

    const DesignMatrix& design_;
    const PriorSpec& priors_;
    const McmcConfig& config_;
    std::optional<std::chrono::steady_clock::time_point> deadline_;
    std::mt19937_64 rng_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    ChainState state_;
    Eigen::VectorXd scratch_;
    std::vector<double> log_step_;
};

double variance(std::span<const double> v, double mean) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    return ss / static_cast<double>(v.size() - 1);
}

double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

// ---------------------------------------------------------------------------

void PriorSpec::validate() const {
    if (!(beta_scale > 0) || !(sigma_scale > 0) || !(nu_shape > 0) || !(nu_rate > 0)) {
        throw UsageError("prior scales and gamma parameters must all be positive");
    }
}

void McmcConfig::validate() const {
    if (n_chains < 2) throw UsageError("n_chains must be at least 2");
    if (n_warmup < 0) throw UsageError("n_warmup must be non-negative");
    if (n_samples < 100) throw UsageError("n_samples must be at least 100 per chain");
    if (!(step_adapt_target > 0.0 && step_adapt_target < 1.0)) {
        throw UsageError("step_adapt_target must lie in (0, 1)");
    }
}

std::vector<std::string> parameter_names(const DesignMatrix& design) {
    std::vector<std::string> names{"alpha"};
    for (const auto& f : design.feature_names) names.push_back("beta_" + f);
    names.emplace_back("sigma");
    names.emplace_back("nu");
    return names;
}

PosteriorChains::PosteriorChains(std::vector<std::string> names, int n_chains, int n_samples,
                                 std::vector<double> draws, std::uint64_t seed)
    : names_(std::move(names)), n_chains_(n_chains), n_samples_(n_samples), draws_(std::move(draws)), seed_(seed) {
    if (n_chains_ < 1 || n_samples_ < 1) throw SizeError("posterior chains need at least one draw");
    if (draws_.size() != static_cast<std::size_t>(n_chains_) * static_cast<std::size_t>(n_samples_) * names_.size()) {
        throw SizeError("draw array size does not match chains x samples x parameters");
    }
}

std::size_t PosteriorChains::index_of(const std::string& name) const {
    for (std::size_t k = 0; k < names_.size(); ++k) {
        if (names_[k] == name) return k;
    }
    throw NotFoundError("no parameter named '" + name + "'");
}

std::vector<double> PosteriorChains::chain_draws(int chain, std::size_t param) const {
    std::vector<double> out(static_cast<std::size_t>(n_samples_));
    for (int s = 0; s < n_samples_; ++s) out[static_cast<std::size_t>(s)] = at(chain, s, param);
    return out;
}

std::vector<double> PosteriorChains::pooled(std::size_t param) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(n_chains_) * static_cast<std::size_t>(n_samples_));
    for (int c = 0; c < n_chains_; ++c) {
        for (int s = 0; s < n_samples_; ++s) out.push_back(at(c, s, param));
    }
    return out;
}

double log_likelihood(std::span<const double> params, const DesignMatrix& design) {
    require_finite_design(design);
    const auto p = static_cast<std::size_t>(design.cols());
    if (params.size() != p + 3) throw SchemaError("parameter vector length does not match design");
    const double sigma = params[p + 1];
    const double nu = params[p + 2];
    if (!(sigma > 0.0) || !(nu > 1.0) || !std::isfinite(sigma) || !std::isfinite(nu)) return kNegInf;
    for (double v : params) {
        if (!std::isfinite(v)) return kNegInf;
    }
    Eigen::Map<const Eigen::VectorXd> beta(params.data() + 1, static_cast<Eigen::Index>(p));
    Eigen::VectorXd r = design.y - design.x * beta;
    r.array() -= params[0];
    return t_loglik(r, sigma, nu);
}

double log_prior(std::span<const double> params, const PriorSpec& priors) {
    if (params.size() < 3) throw SchemaError("parameter vector too short");
    const std::size_t k = params.size() - 2;
    const double sigma = params[k];
    const double nu = params[k + 1];
    if (!(sigma > 0.0) || !(nu > 1.0)) return kNegInf;
    double lp = half_cauchy_prior(sigma, priors.sigma_scale) + shifted_gamma_prior(nu, priors.nu_shape, priors.nu_rate);
    for (std::size_t i = 0; i < k; ++i) lp += normal_prior(params[i], priors.beta_scale);
    return lp;
}

double log_density(std::span<const double> params, const DesignMatrix& design, const PriorSpec& priors) {
    const double ll = log_likelihood(params, design);
    if (ll == kNegInf) return kNegInf;
    return ll + log_prior(params, priors);
}

PosteriorChains sample_posterior(const DesignMatrix& design, const PriorSpec& priors, const McmcConfig& config,
                                 std::optional<std::chrono::steady_clock::time_point> deadline) {
    priors.validate();
    config.validate();
    require_finite_design(design);
    if (design.rows() < 2) throw SizeError("Bayesian fit needs at least two observations");

    const StartPoint start = least_squares_start(design);
    std::vector<std::future<std::vector<double>>> jobs;
    jobs.reserve(static_cast<std::size_t>(config.n_chains));
    for (int c = 0; c < config.n_chains; ++c) {
        jobs.push_back(std::async(std::launch::async, [&, c] {
            ChainRunner runner(design, priors, config, start, c, deadline);
            return runner.run();
        }));
    }
    // Drain every future before rethrowing so no thread outlives `design`.
    std::vector<double> draws;
    std::exception_ptr failure;
    for (auto& job : jobs) {
        try {
            auto chain = job.get();
            draws.insert(draws.end(), chain.begin(), chain.end());
        } catch (...) {
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return PosteriorChains(parameter_names(design), config.n_chains, config.n_samples, std::move(draws), config.seed);
}

std::vector<Diagnostic> diagnostics(const PosteriorChains& chains) {
    if (chains.n_chains() < 2) throw UsageError("diagnostics need at least two chains");
    const int half = chains.n_samples() / 2;
    if (half < 2) throw SizeError("diagnostics need at least four draws per chain");

    std::vector<Diagnostic> out;
    for (std::size_t k = 0; k < chains.n_params(); ++k) {
        Diagnostic d;
        d.name = chains.parameter_names()[k];

        // Split each chain into its first and second halves (dropping the
        // middle draw of odd-length chains).
        std::vector<std::vector<double>> parts;
        for (int c = 0; c < chains.n_chains(); ++c) {
            auto all = chains.chain_draws(c, k);
            parts.emplace_back(all.begin(), all.begin() + half);
            parts.emplace_back(all.end() - half, all.end());
        }
        const double first = parts.front().front();
        const bool constant = std::all_of(parts.begin(), parts.end(), [&](const auto& v) {
            return std::all_of(v.begin(), v.end(), [&](double x) { return x == first; });
        });
        if (constant) {
            d.rhat = std::numeric_limits<double>::quiet_NaN();
            d.ess = 0.0;
            d.degenerate = true;
            out.push_back(d);
            continue;
        }

        const auto m = static_cast<double>(parts.size());
        const auto n = static_cast<double>(half);
        std::vector<double> means, vars;
        for (const auto& v : parts) {
            const double mu = mean_of(v);
            means.push_back(mu);
            const bool flat = std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
            vars.push_back(flat ? 0.0 : variance(v, mu));
        }
        const double w = mean_of(vars);
        const double between_over_n = variance(means, mean_of(means));
        const double var_plus = (n - 1.0) / n * w + between_over_n;
        if (!(w > 0.0)) {
            d.rhat = std::numeric_limits<double>::infinity();
            d.ess = 0.0;
            out.push_back(d);
            continue;
        }
        d.rhat = std::sqrt(var_plus / w);

        auto mean_autocov = [&](int lag) {
            double acc = 0.0;
            for (std::size_t c = 0; c < parts.size(); ++c) {
                const auto& v = parts[c];
                double s = 0.0;
                for (int t = 0; t + lag < half; ++t) {
                    s += (v[static_cast<std::size_t>(t)] - means[c]) * (v[static_cast<std::size_t>(t + lag)] - means[c]);
                }
                acc += s / n;
            }
            return acc / m;
        };
        auto rho = [&](int lag) { return 1.0 - (w - mean_autocov(lag)) / var_plus; };

        double tau = -1.0;
        for (int t = 0; t + 1 < half; t += 2) {
            const double pair = rho(t) + rho(t + 1);
            if (pair < 0.0) break;
            tau += 2.0 * pair;
        }
        tau = std::max(tau, 1.0 / std::log10(m * n));
        d.ess = m * n / tau;
        out.push_back(d);
    }
    return out;
}

std::vector<ParamSummary> summarize(const PosteriorChains& chains) {
    std::vector<ParamSummary> out;
    for (std::size_t k = 0; k < chains.n_params(); ++k) {
        auto v = chains.pooled(k);
        if (v.empty()) throw SizeError("cannot summarize an empty posterior");
        std::sort(v.begin(), v.end());
        ParamSummary s;
        s.name = chains.parameter_names()[k];
        s.median = quantile_sorted(v, 0.5);
        s.q25 = quantile_sorted(v, 0.25);
        s.q75 = quantile_sorted(v, 0.75);
        const double iqr = s.q75 - s.q25;
        const double lo_fence = s.q25 - 1.5 * iqr;
        const double hi_fence = s.q75 + 1.5 * iqr;
        s.whisker_low = *std::lower_bound(v.begin(), v.end(), lo_fence);
        s.whisker_high = *(std::upper_bound(v.begin(), v.end(), hi_fence) - 1);
        out.push_back(s);
    }
    return out;
}

std::vector<double> posterior_predictive(const PosteriorChains& chains, std::span<const double> design_row,
                                         int n_draws, std::uint64_t seed) {
    const std::size_t k = chains.n_params();
    if (k < 3 || design_row.size() != k - 3) {
        throw SchemaError("design row has " + std::to_string(design_row.size()) + " entries, posterior has " +
                          std::to_string(k >= 3 ? k - 3 : 0) + " coefficients");
    }
    if (n_draws < 1) throw UsageError("n_draws must be positive");
    std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu), static_cast<std::uint32_t>(seed >> 32),
                      0x7072u};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<int> pick_chain(0, chains.n_chains() - 1);
    std::uniform_int_distribution<int> pick_sample(0, chains.n_samples() - 1);

    std::vector<double> out(static_cast<std::size_t>(n_draws));
    for (auto& v : out) {
        auto params = chains.draw(pick_chain(rng), pick_sample(rng));
        double mu = params[0];
        for (std::size_t j = 0; j < design_row.size(); ++j) mu += params[j + 1] * design_row[j];
        const double sigma = params[k - 2];
        const double nu = params[k - 1];
        std::student_t_distribution<double> t(nu);
        v = mu + sigma * t(rng);
    }
    return out;
}

VarEstimate value_at_risk(std::span<const double> predictive_log_draws, double level,
                          std::optional<Date> horizon_date) {
    if (predictive_log_draws.empty()) throw SizeError("value_at_risk needs at least one draw");
    if (!(level > 0.0 && level < 1.0)) throw UsageError("VaR level must lie in (0, 1)");
    VarEstimate v;
    v.level = level;
    v.horizon_date = horizon_date;
    v.log_quantile = quantile(predictive_log_draws, level);
    v.price_quantile = std::expm1(v.log_quantile);
    return v;
}

std::string chains_to_csv(const PosteriorChains& chains) {
    std::string out = "chain,iteration";
    for (const auto& n : chains.parameter_names()) out += "," + n;
    out += '\n';
    for (int c = 0; c < chains.n_chains(); ++c) {
        for (int s = 0; s < chains.n_samples(); ++s) {
            out += std::to_string(c) + "," + std::to_string(s);
            for (double v : chains.draw(c, s)) out += "," + format_double(v);
            out += '\n';
        }
    }
    return out;
}

void write_chains_csv(const std::filesystem::path& path, const PosteriorChains& chains) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw NotFoundError("cannot write chains file " + path.string());
    out << chains_to_csv(chains);
}

}  // namespace pivotreg
