#pragma once

#include <map>
#include <string>
#include <vector>

#include "pivotreg/date.hpp"

namespace pivotreg {

struct Point {
    Date date;
    double value;

    friend bool operator==(const Point&, const Point&) = default;
};

// A named daily series. Dates are strictly increasing and every value is
// finite; both are enforced on construction.
class TimeSeries {
public:
    TimeSeries() = default;
    TimeSeries(std::string name, std::vector<Point> points);

    // Sorts by date first, then validates. Duplicate dates are rejected.
    static TimeSeries from_unsorted(std::string name, std::vector<Point> points);

    const std::string& name() const noexcept { return name_; }
    const std::vector<Point>& points() const noexcept { return points_; }
    std::size_t size() const noexcept { return points_.size(); }
    bool empty() const noexcept { return points_.empty(); }

    std::vector<Date> dates() const;
    std::vector<double> values() const;

    friend bool operator==(const TimeSeries&, const TimeSeries&) = default;

private:
    std::string name_;
    std::vector<Point> points_;
};

// Column-oriented table of aligned series. Every column holds exactly one
// value per entry of `dates`, and the target column is always present.
struct Dataset {
    std::vector<Date> dates;
    std::map<std::string, std::vector<double>> columns;
    std::string target_name;

    std::size_t size() const noexcept { return dates.size(); }
    const std::vector<double>& column(const std::string& name) const;

    // Throws ValidationError if any invariant is broken.
    void validate() const;

    // Rows with index in [begin, end).
    Dataset slice(std::size_t begin, std::size_t end) const;
};

}  // namespace pivotreg
