#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pivotreg/time_series.hpp"

namespace pivotreg {

// Location and scale (log space) used to z-score one regressor column.
struct ScaleParams {
    std::string column;
    double mean = 0.0;
    double std = 1.0;

    double apply(double v) const { return (v - mean) / std; }
    double invert(double z) const { return z * std + mean; }
};

// Regressors are log1p-transformed and standardized; the target is
// log1p-transformed only.
struct DesignMatrix {
    std::vector<Date> dates;
    std::vector<std::string> feature_names;
    Eigen::MatrixXd x;  // rows() == dates.size(), cols() == feature_names.size()
    Eigen::VectorXd y;
    std::vector<ScaleParams> scales;

    Eigen::Index rows() const { return x.rows(); }
    Eigen::Index cols() const { return x.cols(); }

    // Rows with index in [begin, end); scales are carried over unchanged.
    DesignMatrix slice_rows(Eigen::Index begin, Eigen::Index end) const;
};

// ln(1 + v) pointwise. Values <= -1 are always rejected; values in (-1, 0)
// only when allow_negative is set.
TimeSeries log1p_transform(const TimeSeries& series, bool allow_negative = false);

struct Standardized {
    std::vector<double> values;
    ScaleParams params;
};

// z-scores with the n-1 sample standard deviation.
Standardized standardize(std::span<const double> values, const std::string& column = {});

DesignMatrix build_design(const Dataset& dataset, const std::vector<std::string>& feature_order);

// Same transform as build_design but with scales fitted elsewhere (typically
// on a training window), so no statistics are taken from `dataset`.
DesignMatrix apply_design(const Dataset& dataset, const std::vector<std::string>& feature_order,
                          const std::vector<ScaleParams>& scales);

}  // namespace pivotreg
