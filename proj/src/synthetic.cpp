#include "pivotreg/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pivotreg/error.hpp"
#include "pivotreg/preprocess.hpp"

namespace pivotreg {

namespace {

// Rough log-levels for each regressor so the raw columns look like the
// quantities they are named after.
double base_level(const std::string& name) {
    if (name == "gtrend") return 3.0;
    if (name == "wiki_cryptocurrency") return 8.0;
    if (name == "difficulty") return 27.0;
    if (name == "n_unique_addresses") return 13.0;
    if (name == "total_bitcoins") return 16.5;
    if (name == "volume") return 18.0;
    return 5.0;
}

}  // namespace

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    if (spec.n_days < 10) throw SizeError("synthetic data needs at least 10 days");
    if (spec.pivot_amplitude != 0.0 && spec.n_pivots < 2) throw UsageError("need at least two pivots");
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed & 0xffffffffu), static_cast<std::uint32_t>(spec.seed >> 32),
                      0x5917u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::student_t_distribution<double> student(spec.noise_nu);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const auto n = static_cast<std::size_t>(spec.n_days);
    SyntheticData out;
    out.dataset.target_name = "price";
    for (std::size_t i = 0; i < n; ++i) out.dataset.dates.push_back(spec.start + std::chrono::days{static_cast<long>(i)});

    // Regressors: AR(1) in log space around a per-feature level.
    std::vector<std::vector<double>> z;
    for (const auto& [name, beta] : spec.betas) {
        std::vector<double> raw(n);
        double u = normal(rng);
        for (std::size_t i = 0; i < n; ++i) {
            u = 0.9 * u + std::sqrt(1.0 - 0.81) * normal(rng);
            raw[i] = std::expm1(base_level(name) + 0.5 * u);
        }
        std::vector<double> logged(n);
        for (std::size_t i = 0; i < n; ++i) logged[i] = std::log1p(raw[i]);
        z.push_back(standardize(logged, name).values);
        out.dataset.columns.emplace(name, std::move(raw));
        out.features.push_back(name);
        out.betas.push_back(beta);
    }

    // Deviation through evenly spaced pivots (interior dates jittered).
    out.deviation.assign(n, 0.0);
    if (spec.pivot_amplitude != 0.0) {
        const auto k = static_cast<std::size_t>(spec.n_pivots);
        std::vector<std::size_t> idx(k);
        for (std::size_t p = 0; p < k; ++p) {
            const double pos = static_cast<double>(p) * static_cast<double>(n - 1) / static_cast<double>(k - 1);
            const double spacing = static_cast<double>(n - 1) / static_cast<double>(k - 1);
            const double jitter = (p == 0 || p + 1 == k) ? 0.0 : (unif(rng) - 0.5) * 0.3 * spacing;
            idx[p] = static_cast<std::size_t>(std::lround(pos + jitter));
        }
        std::vector<PivotPoint> pivots;
        for (std::size_t p = 0; p < k; ++p) {
            const double v = (p % 2 == 0 ? 1.0 : -1.0) * spec.pivot_amplitude;
            pivots.push_back({out.dataset.dates[idx[p]], v});
        }
        for (std::size_t p = 0; p + 1 < k; ++p) {
            const double v0 = pivots[p].value, v1 = pivots[p + 1].value;
            const double span = static_cast<double>(idx[p + 1] - idx[p]);
            for (std::size_t i = idx[p]; i <= idx[p + 1]; ++i) {
                out.deviation[i] = v0 + (v1 - v0) * static_cast<double>(i - idx[p]) / span;
            }
        }
        out.oracle_pivots = PivotSet(std::move(pivots));
    }

    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mu = spec.alpha + out.deviation[i];
        for (std::size_t j = 0; j < z.size(); ++j) mu += out.betas[j] * z[j][i];
        y[i] = mu + spec.noise_sigma * student(rng);
    }

    const auto n_out = static_cast<std::size_t>(std::lround(spec.outlier_fraction * static_cast<double>(n)));
    if (n_out > 0) {
        std::vector<std::size_t> rows(n);
        for (std::size_t i = 0; i < n; ++i) rows[i] = i;
        for (std::size_t i = 0; i < n_out; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, n - 1);
            std::swap(rows[i], rows[pick(rng)]);
        }
        rows.resize(n_out);
        std::sort(rows.begin(), rows.end());
        for (auto r : rows) y[r] += spec.outlier_shift;
        out.outlier_rows = std::move(rows);
    }

    std::vector<double> price(n);
    for (std::size_t i = 0; i < n; ++i) price[i] = std::expm1(y[i]);
    out.dataset.columns.emplace("price", std::move(price));

    out.alpha = spec.alpha;
    out.sigma = spec.noise_sigma;
    out.nu = spec.noise_nu;
    double mean = 0.0;
    for (double d : out.deviation) mean += d;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double d : out.deviation) ss += (d - mean) * (d - mean);
    out.alpha_with_expert = spec.alpha + mean;
    out.beta_expert = std::sqrt(ss / static_cast<double>(n - 1));
    return out;
}

}  // namespace pivotreg
