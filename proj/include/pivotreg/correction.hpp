#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pivotreg/preprocess.hpp"
#include "pivotreg/time_series.hpp"

namespace pivotreg {

inline constexpr std::string_view kExpertColumn = "expert";

// An anchor on the log-deviation series.
struct PivotPoint {
    Date date;
    double value;

    friend bool operator==(const PivotPoint&, const PivotPoint&) = default;
};

// Pivots with strictly increasing dates and finite values.
class PivotSet {
public:
    PivotSet() = default;
    explicit PivotSet(std::vector<PivotPoint> pivots);

    const std::vector<PivotPoint>& pivots() const noexcept { return pivots_; }
    std::size_t size() const noexcept { return pivots_.size(); }
    bool empty() const noexcept { return pivots_.empty(); }

    friend bool operator==(const PivotSet&, const PivotSet&) = default;

private:
    std::vector<PivotPoint> pivots_;
};

// One problem found while decoding a pivot payload, addressed by array index
// and field so a client can highlight the offending pivot.
struct PivotViolation {
    std::size_t index;
    std::string field;
    std::string message;
};

// Wire format: [{"date": "YYYY-MM-DD", "value": number}, ...]
std::vector<PivotViolation> check_pivot_json(const nlohmann::json& payload);
// Throws ValidationError carrying every violation.
PivotSet pivots_from_json(const nlohmann::json& payload);
nlohmann::json pivots_to_json(const PivotSet& pivots);

PivotSet load_pivots(const std::filesystem::path& path);
void write_pivots(const std::filesystem::path& path, const PivotSet& pivots);

struct CorrectionTerm {
    TimeSeries series;
    PivotSet source;
};

// d_i = actual_i - predicted_i in log space; exp(d_i) is the ratio of
// (price + 1) terms.
TimeSeries deviation_series(std::span<const double> actual_log, std::span<const double> predicted_log,
                            const std::vector<Date>& dates);

// Candidate pivots: points strictly above or strictly below every other point
// within `window` positions on either side (the neighbourhood is clipped at
// the series ends), plus the first and last points.
PivotSet suggest_pivots(const TimeSeries& deviation, int window);

// Piecewise-linear in calendar days between consecutive pivots, held constant
// at the first/last pivot value outside their span.
CorrectionTerm interpolate_correction(const PivotSet& pivots, const std::vector<Date>& dates);

// Appends the correction as a standardized column named "expert".
DesignMatrix augment_design(const DesignMatrix& design, const CorrectionTerm& correction);

// Appends the correction using an existing scale (e.g. from the training
// window); a constant correction is allowed here.
DesignMatrix augment_design(const DesignMatrix& design, const CorrectionTerm& correction,
                            const ScaleParams& scale);

}  // namespace pivotreg
