#include "pivotreg/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pivotreg/error.hpp"

namespace pivotreg {

void LassoConfig::validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw UsageError("lambda must be a finite value >= 0");
    if (max_iter <= 0) throw UsageError("max_iter must be positive");
    if (!(tol > 0.0)) throw UsageError("tol must be positive");
}

double LassoFit::coefficient(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j) {
        if (names[j] == name) return coefficients[static_cast<Eigen::Index>(j)];
    }
    throw NotFoundError("no coefficient named '" + name + "'");
}

LassoFit fit_lasso(const DesignMatrix& design, const LassoConfig& config) {
    config.validate();
    const Eigen::Index n = design.rows();
    const Eigen::Index p = design.cols();
    if (n < 1) throw SizeError("lasso needs at least one observation");
    if (design.y.size() != n) throw SchemaError("target length does not match design rows");
    if (n < p && config.lambda == 0.0) throw SizeError("unpenalized fit needs n >= p");
    if (!design.x.allFinite() || !design.y.allFinite()) throw NumericError("design contains non-finite entries");

    const double nd = static_cast<double>(n);
    const Eigen::RowVectorXd x_mean = design.x.colwise().mean();
    const double y_mean = design.y.mean();
    const Eigen::MatrixXd xc = design.x.rowwise() - x_mean;
    const Eigen::VectorXd col_scale = xc.colwise().squaredNorm().transpose() / nd;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd resid = design.y.array() - y_mean;

    LassoFit fit;
    fit.names = design.feature_names;
    fit.lambda = config.lambda;

    for (int sweep = 1; sweep <= config.max_iter; ++sweep) {
        double max_change = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (col_scale[j] == 0.0) continue;
            const double rho = xc.col(j).dot(resid) / nd + col_scale[j] * beta[j];
            const double updated = soft_threshold(rho, config.lambda) / col_scale[j];
            const double delta = updated - beta[j];
            if (delta != 0.0) {
                resid.noalias() -= delta * xc.col(j);
                beta[j] = updated;
                max_change = std::max(max_change, std::abs(delta));
            }
        }
        fit.n_iter = sweep;
        fit.objective_trace.push_back(resid.squaredNorm() / (2.0 * nd) + config.lambda * beta.lpNorm<1>());
        if (max_change < config.tol) {
            fit.converged = true;
            break;
        }
    }

    fit.coefficients = beta;
    fit.intercept = y_mean - x_mean.dot(beta);
    return fit;
}

double lasso_objective(const DesignMatrix& design, double intercept, const Eigen::VectorXd& beta,
                       double lambda) {
    const Eigen::VectorXd r = (design.y - design.x * beta).array() - intercept;
    return r.squaredNorm() / (2.0 * static_cast<double>(design.rows())) + lambda * beta.lpNorm<1>();
}

double null_lambda(const DesignMatrix& design) {
    const Eigen::MatrixXd xc = design.x.rowwise() - design.x.colwise().mean();
    const Eigen::VectorXd yc = design.y.array() - design.y.mean();
    // Same arithmetic as the first coordinate-descent update, so a fit at
    // exactly this value keeps every coefficient at zero.
    const double nd = static_cast<double>(design.rows());
    double out = 0.0;
    for (Eigen::Index j = 0; j < design.cols(); ++j) out = std::max(out, std::abs(xc.col(j).dot(yc) / nd));
    return out;
}

Eigen::VectorXd predict(const LassoFit& fit, const DesignMatrix& design) {
    if (fit.names != design.feature_names) throw SchemaError("design features do not match fit coefficients");
    return (design.x * fit.coefficients).array() + fit.intercept;
}

KktResult check_kkt(const LassoFit& fit, const DesignMatrix& design, double slack) {
    const Eigen::VectorXd r = design.y - predict(fit, design);
    const double nd = static_cast<double>(design.rows());
    KktResult out;
    for (Eigen::Index j = 0; j < design.cols(); ++j) {
        const double g = design.x.col(j).dot(r) / nd;
        const double b = fit.coefficients[j];
        double violation = 0.0;
        if (b != 0.0) {
            violation = std::abs(g - fit.lambda * (b > 0 ? 1.0 : -1.0));
            if (!(violation < slack)) out.ok = false;
        } else {
            violation = std::max(0.0, std::abs(g) - fit.lambda);
            if (!(std::abs(g) <= fit.lambda + slack)) out.ok = false;
        }
        out.max_violation = std::max(out.max_violation, violation);
    }
    return out;
}

double select_lambda(const DesignMatrix& design, std::span<const double> grid, int n_folds,
                     const LassoConfig& base) {
    if (grid.empty()) throw UsageError("lambda grid is empty");
    for (double l : grid) {
        if (!(l >= 0.0) || !std::isfinite(l)) throw UsageError("lambda grid values must be finite and >= 0");
    }
    if (n_folds < 2) throw UsageError("n_folds must be at least 2");
    const Eigen::Index n = design.rows();
    const Eigen::Index block = n / (n_folds + 1);
    if (block < 2) {
        throw SizeError(std::to_string(n) + " rows are too few for " + std::to_string(n_folds) +
                        " forward-chaining folds");
    }

    double best_lambda = grid.front();
    double best_err = std::numeric_limits<double>::infinity();
    for (double lambda : grid) {
        LassoConfig cfg = base;
        cfg.lambda = lambda;
        double err = 0.0;
        for (int k = 1; k <= n_folds; ++k) {
            const Eigen::Index train_end = k * block;
            const Eigen::Index valid_end = k == n_folds ? n : (k + 1) * block;
            auto train = design.slice_rows(0, train_end);
            auto valid = design.slice_rows(train_end, valid_end);
            auto fit = fit_lasso(train, cfg);
            err += (valid.y - predict(fit, valid)).squaredNorm() / static_cast<double>(valid.rows());
        }
        err /= n_folds;
        const double tie = 1e-12 * std::max(1.0, std::abs(best_err));
        if (!std::isfinite(best_err) || err < best_err - tie || (std::abs(err - best_err) <= tie && lambda > best_lambda)) {
            best_err = err;
            best_lambda = lambda;
        }
    }
    return best_lambda;
}

}  // namespace pivotreg
