#include "pivotreg/time_series.hpp"

#include <algorithm>
#include <cmath>

#include "pivotreg/error.hpp"

namespace pivotreg {

TimeSeries::TimeSeries(std::string name, std::vector<Point> points)
    : name_(std::move(name)), points_(std::move(points)) {
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (!std::isfinite(points_[i].value)) {
            throw ValidationError("series '" + name_ + "': non-finite value at " +
                                  format_date(points_[i].date));
        }
        if (i > 0 && points_[i].date <= points_[i - 1].date) {
            throw ValidationError("series '" + name_ + "': " +
                                  (points_[i].date == points_[i - 1].date ? "duplicate date "
                                                                          : "dates not increasing at ") +
                                  format_date(points_[i].date));
        }
    }
}

TimeSeries TimeSeries::from_unsorted(std::string name, std::vector<Point> points) {
    std::stable_sort(points.begin(), points.end(),
                     [](const Point& a, const Point& b) { return a.date < b.date; });
    return TimeSeries(std::move(name), std::move(points));
}

std::vector<Date> TimeSeries::dates() const {
    std::vector<Date> out;
    out.reserve(points_.size());
    for (const auto& p : points_) out.push_back(p.date);
    return out;
}

std::vector<double> TimeSeries::values() const {
    std::vector<double> out;
    out.reserve(points_.size());
    for (const auto& p : points_) out.push_back(p.value);
    return out;
}

const std::vector<double>& Dataset::column(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) throw NotFoundError("column '" + name + "' not in dataset");
    return it->second;
}

void Dataset::validate() const {
    for (std::size_t i = 1; i < dates.size(); ++i) {
        if (dates[i] <= dates[i - 1]) throw ValidationError("dataset dates not strictly increasing");
    }
    for (const auto& [name, values] : columns) {
        if (values.size() != dates.size()) {
            throw ValidationError("column '" + name + "' has " + std::to_string(values.size()) +
                                  " values for " + std::to_string(dates.size()) + " dates");
        }
    }
    if (!columns.contains(target_name)) {
        throw ValidationError("target column '" + target_name + "' not in dataset");
    }
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
    Dataset out;
    out.target_name = target_name;
    out.dates.assign(dates.begin() + begin, dates.begin() + end);
    for (const auto& [name, values] : columns) {
        out.columns.emplace(name, std::vector<double>(values.begin() + begin, values.begin() + end));
    }
    return out;
}

}  // namespace pivotreg
