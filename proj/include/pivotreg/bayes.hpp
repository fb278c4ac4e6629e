#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pivotreg/preprocess.hpp"

namespace pivotreg {

// Robust regression y_i ~ Student_t(nu, alpha + x_i beta, sigma).
//
// Priors: alpha, beta_j ~ Normal(0, beta_scale); sigma ~ HalfCauchy(sigma_scale);
// nu - 1 ~ Gamma(nu_shape, rate = nu_rate), so nu > 1 always.
struct PriorSpec {
    double beta_scale = 10.0;
    double sigma_scale = 1.0;
    double nu_shape = 2.0;
    double nu_rate = 0.1;

    void validate() const;
};

struct McmcConfig {
    int n_chains = 4;
    int n_warmup = 1000;
    int n_samples = 2000;
    std::uint64_t seed = 0;
    double step_adapt_target = 0.44;

    void validate() const;
};

// Parameter vectors are laid out as (alpha, beta_1..beta_p, sigma, nu).
std::vector<std::string> parameter_names(const DesignMatrix& design);

class PosteriorChains {
public:
    PosteriorChains() = default;
    // `draws` is chain-major: draws[(c * n_samples + s) * n_params + k].
    PosteriorChains(std::vector<std::string> names, int n_chains, int n_samples, std::vector<double> draws,
                    std::uint64_t seed);

    const std::vector<std::string>& parameter_names() const noexcept { return names_; }
    int n_chains() const noexcept { return n_chains_; }
    int n_samples() const noexcept { return n_samples_; }
    std::size_t n_params() const noexcept { return names_.size(); }
    std::uint64_t seed() const noexcept { return seed_; }

    double at(int chain, int sample, std::size_t param) const {
        return draws_[(static_cast<std::size_t>(chain) * static_cast<std::size_t>(n_samples_) +
                       static_cast<std::size_t>(sample)) *
                          names_.size() +
                      param];
    }
    std::span<const double> draw(int chain, int sample) const {
        return {draws_.data() + (static_cast<std::size_t>(chain) * static_cast<std::size_t>(n_samples_) +
                                 static_cast<std::size_t>(sample)) *
                                    names_.size(),
                names_.size()};
    }

    std::size_t index_of(const std::string& name) const;
    std::vector<double> chain_draws(int chain, std::size_t param) const;
    // All chains pooled, chain by chain.
    std::vector<double> pooled(std::size_t param) const;

    const std::vector<double>& raw() const noexcept { return draws_; }

    friend bool operator==(const PosteriorChains&, const PosteriorChains&) = default;

private:
    std::vector<std::string> names_;
    int n_chains_ = 0;
    int n_samples_ = 0;
    std::vector<double> draws_;
    std::uint64_t seed_ = 0;
};

double log_likelihood(std::span<const double> params, const DesignMatrix& design);
double log_prior(std::span<const double> params, const PriorSpec& priors);

// Unnormalized log posterior. Returns -infinity outside the support
// (sigma <= 0 or nu <= 1) instead of throwing.
double log_density(std::span<const double> params, const DesignMatrix& design, const PriorSpec& priors);

// Componentwise adaptive random-walk Metropolis. sigma and nu - 1 are
// proposed on the log scale. Step sizes are tuned per component in batches
// during warmup toward step_adapt_target acceptance and frozen afterwards.
// Each chain runs from its own generator seeded from (seed, chain index).
// Throws TimeoutError if `deadline` passes before sampling completes.
PosteriorChains sample_posterior(const DesignMatrix& design, const PriorSpec& priors, const McmcConfig& config,
                                 std::optional<std::chrono::steady_clock::time_point> deadline = std::nullopt);

struct Diagnostic {
    std::string name;
    double rhat = 0.0;  // NaN when every draw is identical
    double ess = 0.0;
    bool degenerate = false;
};

// Split-R-hat and autocorrelation ESS (Geyer pairs, truncated at the first
// negative pair sum) per parameter. Needs at least two chains.
std::vector<Diagnostic> diagnostics(const PosteriorChains& chains);

struct ParamSummary {
    std::string name;
    double median = 0.0;
    double q25 = 0.0;
    double q75 = 0.0;
    double whisker_low = 0.0;
    double whisker_high = 0.0;
};

// Box-plot statistics over pooled draws; whiskers stop at the most extreme
// draw within 1.5 IQR of the box.
std::vector<ParamSummary> summarize(const PosteriorChains& chains);

// Log-price draws alpha + x beta + sigma * t_nu, each using a posterior draw
// picked uniformly at random. `design_row` is in standardized feature units.
std::vector<double> posterior_predictive(const PosteriorChains& chains, std::span<const double> design_row,
                                         int n_draws, std::uint64_t seed);

struct VarEstimate {
    double level = 0.0;
    std::optional<Date> horizon_date;
    double price_quantile = 0.0;  // expm1(log_quantile)
    double log_quantile = 0.0;
};

VarEstimate value_at_risk(std::span<const double> predictive_log_draws, double level,
                          std::optional<Date> horizon_date = std::nullopt);

// CSV with columns chain, iteration, then one column per parameter.
std::string chains_to_csv(const PosteriorChains& chains);
void write_chains_csv(const std::filesystem::path& path, const PosteriorChains& chains);

}  // namespace pivotreg
