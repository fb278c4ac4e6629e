#include "pivotreg/correction.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>

#include "pivotreg/error.hpp"

namespace pivotreg {

PivotSet::PivotSet(std::vector<PivotPoint> pivots) : pivots_(std::move(pivots)) {
    for (std::size_t i = 0; i < pivots_.size(); ++i) {
        if (!std::isfinite(pivots_[i].value)) {
            throw ValidationError("pivot " + std::to_string(i) + " has a non-finite value");
        }
        if (i > 0 && pivots_[i].date <= pivots_[i - 1].date) {
            throw ValidationError("pivot dates must be strictly increasing (pivot " + std::to_string(i) + ", " +
                                  format_date(pivots_[i].date) + ")");
        }
    }
}

std::vector<PivotViolation> check_pivot_json(const nlohmann::json& payload) {
    std::vector<PivotViolation> out;
    if (!payload.is_array()) {
        out.push_back({0, "", "pivots must be a JSON array"});
        return out;
    }
    bool have_previous = false;
    Date previous{};
    for (std::size_t i = 0; i < payload.size(); ++i) {
        const auto& item = payload[i];
        if (!item.is_object()) {
            out.push_back({i, "", "pivot must be an object with date and value"});
            have_previous = false;
            continue;
        }
        std::optional<Date> date;
        if (!item.contains("date") || !item["date"].is_string()) {
            out.push_back({i, "date", "missing or not a string"});
        } else {
            try {
                date = parse_date(item["date"].get<std::string>());
            } catch (const ValidationError& e) {
                out.push_back({i, "date", e.what()});
            }
        }
        if (!item.contains("value") || !item["value"].is_number()) {
            out.push_back({i, "value", "missing or not a number"});
        } else if (!std::isfinite(item["value"].get<double>())) {
            out.push_back({i, "value", "must be finite"});
        }
        if (date && have_previous && *date <= previous) {
            out.push_back({i, "date",
                           "dates must be strictly increasing: " + format_date(*date) + " does not follow " +
                               format_date(previous)});
        }
        if (date) {
            previous = *date;
            have_previous = true;
        }
    }
    return out;
}

PivotSet pivots_from_json(const nlohmann::json& payload) {
    auto violations = check_pivot_json(payload);
    if (!violations.empty()) {
        std::string msg = "invalid pivots:";
        for (const auto& v : violations) {
            msg += " [" + std::to_string(v.index) + (v.field.empty() ? "" : "." + v.field) + "] " + v.message + ";";
        }
        throw ValidationError(msg);
    }
    std::vector<PivotPoint> pts;
    pts.reserve(payload.size());
    for (const auto& item : payload) {
        pts.push_back({parse_date(item["date"].get<std::string>()), item["value"].get<double>()});
    }
    return PivotSet(std::move(pts));
}

nlohmann::json pivots_to_json(const PivotSet& pivots) {
    auto out = nlohmann::json::array();
    for (const auto& p : pivots.pivots()) {
        out.push_back({{"date", format_date(p.date)}, {"value", p.value}});
    }
    return out;
}

PivotSet load_pivots(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open pivot file " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("pivot file " + path.string() + " is not valid JSON: " + e.what());
    }
    return pivots_from_json(j);
}

void write_pivots(const std::filesystem::path& path, const PivotSet& pivots) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw NotFoundError("cannot write pivot file " + path.string());
    out << pivots_to_json(pivots).dump(2) << '\n';
}

TimeSeries deviation_series(std::span<const double> actual_log, std::span<const double> predicted_log,
                            const std::vector<Date>& dates) {
    if (actual_log.size() != predicted_log.size() || actual_log.size() != dates.size()) {
        throw SizeError("deviation_series: actual, predicted and dates differ in length");
    }
    std::vector<Point> pts(dates.size());
    for (std::size_t i = 0; i < dates.size(); ++i) pts[i] = {dates[i], actual_log[i] - predicted_log[i]};
    return TimeSeries("deviation", std::move(pts));
}

PivotSet suggest_pivots(const TimeSeries& deviation, int window) {
    if (window < 1) throw UsageError("suggest_pivots: window must be >= 1");
    const auto& pts = deviation.points();
    const std::size_t n = pts.size();
    const auto w = static_cast<std::size_t>(window);
    if (n < 2 * w + 1) {
        throw SizeError("suggest_pivots: series of length " + std::to_string(n) + " is shorter than 2*window+1");
    }
    std::vector<PivotPoint> out{{pts.front().date, pts.front().value}};
    for (std::size_t i = 1; i + 1 < n; ++i) {
        const std::size_t lo = i >= w ? i - w : 0;
        const std::size_t hi = std::min(n - 1, i + w);
        bool is_max = true, is_min = true;
        for (std::size_t k = lo; k <= hi && (is_max || is_min); ++k) {
            if (k == i) continue;
            if (pts[k].value >= pts[i].value) is_max = false;
            if (pts[k].value <= pts[i].value) is_min = false;
        }
        if (is_max || is_min) out.push_back({pts[i].date, pts[i].value});
    }
    out.push_back({pts.back().date, pts.back().value});
    return PivotSet(std::move(out));
}

CorrectionTerm interpolate_correction(const PivotSet& pivots, const std::vector<Date>& dates) {
    if (pivots.empty()) throw UsageError("interpolate_correction: pivot set is empty");
    if (dates.empty()) throw UsageError("interpolate_correction: no query dates");
    const auto& pv = pivots.pivots();
    std::vector<Point> pts;
    pts.reserve(dates.size());
    std::size_t seg = 0;
    for (Date d : dates) {
        double v;
        if (d <= pv.front().date) {
            v = pv.front().value;
        } else if (d >= pv.back().date) {
            v = pv.back().value;
        } else {
            while (pv[seg + 1].date < d) ++seg;
            while (seg > 0 && pv[seg].date > d) --seg;
            const PivotPoint& a = pv[seg];
            const PivotPoint& b = pv[seg + 1];
            if (d == a.date) {
                v = a.value;
            } else if (d == b.date) {
                v = b.value;
            } else {
                const double t = static_cast<double>(day_number(d) - day_number(a.date)) /
                                 static_cast<double>(day_number(b.date) - day_number(a.date));
                v = std::clamp(a.value + (b.value - a.value) * t, std::min(a.value, b.value),
                               std::max(a.value, b.value));
            }
        }
        pts.push_back({d, v});
    }
    return {TimeSeries(std::string(kExpertColumn), std::move(pts)), pivots};
}

namespace {

DesignMatrix append_column(const DesignMatrix& design, const CorrectionTerm& correction, const ScaleParams& scale) {
    if (correction.series.dates() != design.dates) {
        throw AlignmentError("correction dates do not match design dates");
    }
    for (const auto& name : design.feature_names) {
        if (name == kExpertColumn) throw SchemaError("design already has an expert column");
    }
    DesignMatrix out = design;
    const Eigen::Index p = design.cols();
    out.x.conservativeResize(Eigen::NoChange, p + 1);
    const auto values = correction.series.values();
    for (Eigen::Index i = 0; i < design.rows(); ++i) out.x(i, p) = scale.apply(values[static_cast<std::size_t>(i)]);
    out.feature_names.emplace_back(kExpertColumn);
    out.scales.push_back(scale);
    return out;
}

}  // namespace

DesignMatrix augment_design(const DesignMatrix& design, const CorrectionTerm& correction) {
    if (correction.series.dates() != design.dates) {
        throw AlignmentError("correction dates do not match design dates");
    }
    auto scale = standardize(correction.series.values(), std::string(kExpertColumn)).params;
    return append_column(design, correction, scale);
}

DesignMatrix augment_design(const DesignMatrix& design, const CorrectionTerm& correction,
                            const ScaleParams& scale) {
    if (!(scale.std > 0.0)) throw DegenerateColumnError("expert scale must be positive");
    return append_column(design, correction, scale);
}

}  // namespace pivotreg
