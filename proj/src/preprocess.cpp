#include "pivotreg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "pivotreg/error.hpp"

namespace pivotreg {

namespace {

std::vector<double> log1p_column(const std::vector<double>& values, const std::vector<Date>& dates,
                                 const std::string& column) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0.0)) {
            throw DomainError("column '" + column + "': value " + std::to_string(values[i]) + " at " +
                              format_date(dates[i]) + " is outside the log1p domain");
        }
        out[i] = std::log1p(values[i]);
    }
    return out;
}

void check_features(const Dataset& dataset, const std::vector<std::string>& feature_order) {
    std::set<std::string> seen;
    for (const auto& name : feature_order) {
        if (!dataset.columns.contains(name)) throw NotFoundError("feature '" + name + "' not in dataset");
        if (!seen.insert(name).second) throw SchemaError("feature '" + name + "' listed twice");
    }
    if (!dataset.columns.contains(dataset.target_name)) {
        throw NotFoundError("target '" + dataset.target_name + "' not in dataset");
    }
}

}  // namespace

DesignMatrix DesignMatrix::slice_rows(Eigen::Index begin, Eigen::Index end) const {
    DesignMatrix out;
    out.dates.assign(dates.begin() + begin, dates.begin() + end);
    out.feature_names = feature_names;
    out.x = x.middleRows(begin, end - begin);
    out.y = y.segment(begin, end - begin);
    out.scales = scales;
    return out;
}

TimeSeries log1p_transform(const TimeSeries& series, bool allow_negative) {
    std::vector<Point> out;
    out.reserve(series.size());
    for (const auto& p : series.points()) {
        if (p.value <= -1.0 || (!allow_negative && p.value < 0.0)) {
            throw DomainError("series '" + series.name() + "': value " + std::to_string(p.value) + " at " +
                              format_date(p.date) + " is outside the log1p domain");
        }
        out.push_back({p.date, std::log1p(p.value)});
    }
    return TimeSeries(series.name(), std::move(out));
}

Standardized standardize(std::span<const double> values, const std::string& column) {
    const std::size_t n = values.size();
    if (n < 2) throw SizeError("column '" + column + "': standardize needs at least 2 values");
    if (std::all_of(values.begin(), values.end(), [&](double v) { return v == values[0]; })) {
        throw DegenerateColumnError("column '" + column + "' is constant");
    }
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0) || !std::isfinite(sd)) throw DegenerateColumnError("column '" + column + "' has no spread");

    Standardized out{std::vector<double>(n), ScaleParams{column, mean, sd}};
    for (std::size_t i = 0; i < n; ++i) out.values[i] = (values[i] - mean) / sd;
    return out;
}

DesignMatrix build_design(const Dataset& dataset, const std::vector<std::string>& feature_order) {
    check_features(dataset, feature_order);
    std::vector<ScaleParams> scales;
    scales.reserve(feature_order.size());
    for (const auto& name : feature_order) {
        auto logged = log1p_column(dataset.column(name), dataset.dates, name);
        scales.push_back(standardize(logged, name).params);
    }
    return apply_design(dataset, feature_order, scales);
}

DesignMatrix apply_design(const Dataset& dataset, const std::vector<std::string>& feature_order,
                          const std::vector<ScaleParams>& scales) {
    check_features(dataset, feature_order);
    if (scales.size() != feature_order.size()) throw SchemaError("scale count does not match feature count");
    const auto n = static_cast<Eigen::Index>(dataset.size());
    const auto p = static_cast<Eigen::Index>(feature_order.size());

    DesignMatrix d;
    d.dates = dataset.dates;
    d.feature_names = feature_order;
    d.scales = scales;
    d.x.resize(n, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const auto& name = feature_order[static_cast<std::size_t>(j)];
        const auto& scale = scales[static_cast<std::size_t>(j)];
        if (scale.column != name) throw SchemaError("scale for '" + scale.column + "' given for '" + name + "'");
        auto logged = log1p_column(dataset.column(name), dataset.dates, name);
        for (Eigen::Index i = 0; i < n; ++i) d.x(i, j) = scale.apply(logged[static_cast<std::size_t>(i)]);
    }
    auto target = log1p_column(dataset.column(dataset.target_name), dataset.dates, dataset.target_name);
    d.y = Eigen::Map<const Eigen::VectorXd>(target.data(), n);
    return d;
}

}  // namespace pivotreg
