#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pivotreg/preprocess.hpp"

namespace pivotreg {

// Penalty is applied to the objective
//   (1/(2n)) * ||y - alpha - X beta||^2 + lambda * ||beta||_1
// with the intercept alpha left unpenalized.
struct LassoConfig {
    double lambda = 0.0;
    int max_iter = 10'000;  // full sweeps over the coefficients
    double tol = 1e-7;      // stop once no coefficient moves by tol or more

    void validate() const;
};

struct LassoFit {
    double intercept = 0.0;
    std::vector<std::string> names;
    Eigen::VectorXd coefficients;
    double lambda = 0.0;
    int n_iter = 0;
    bool converged = false;
    // Objective value after each sweep.
    std::vector<double> objective_trace;

    double coefficient(const std::string& name) const;
};

inline double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

// Cyclic coordinate descent in feature order. A fit that exhausts max_iter
// is returned with converged == false rather than thrown.
LassoFit fit_lasso(const DesignMatrix& design, const LassoConfig& config);

double lasso_objective(const DesignMatrix& design, double intercept, const Eigen::VectorXd& beta,
                       double lambda);

// Smallest lambda at which every coefficient is exactly zero.
double null_lambda(const DesignMatrix& design);

// Log-space fitted values alpha + X beta.
Eigen::VectorXd predict(const LassoFit& fit, const DesignMatrix& design);

struct KktResult {
    bool ok = true;
    double max_violation = 0.0;  // worst |stationarity residual| over active set,
                                 // worst excess over lambda over the inactive set
};

// Stationarity check: for beta_j != 0, |x_j'r/n - lambda*sign(beta_j)| < slack;
// for beta_j == 0, |x_j'r/n| <= lambda + slack, with r = y - alpha - X beta.
KktResult check_kkt(const LassoFit& fit, const DesignMatrix& design, double slack);

// Forward-chaining time-series cross-validation: rows are cut into
// n_folds + 1 contiguous blocks and fold k trains on blocks [0, k) and
// scores block k. Returns the grid value with the lowest mean squared error;
// near-ties go to the larger lambda.
double select_lambda(const DesignMatrix& design, std::span<const double> grid, int n_folds,
                     const LassoConfig& base = {});

}  // namespace pivotreg
