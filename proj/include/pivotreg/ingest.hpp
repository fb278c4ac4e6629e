#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pivotreg/time_series.hpp"

namespace pivotreg {

// ---------------------------------------------------------------------------
// CSV series files: header `date,value`, one row per day.

TimeSeries parse_series_csv(std::string_view text, const std::string& name);
std::string format_series_csv(const TimeSeries& series);

// An empty file yields an empty series. Rows may appear in any order.
TimeSeries load_series(const std::filesystem::path& path, const std::string& name);
void write_series(const std::filesystem::path& path, const TimeSeries& series);

// ---------------------------------------------------------------------------
// Chain statistics client.

enum class ChainMetric { TotalBitcoins, MarketPrice, TradeVolume, Difficulty, NUniqueAddresses };

// Accepts the endpoint spelling (`market-price`); throws UsageError otherwise.
ChainMetric parse_chain_metric(std::string_view metric);
std::string_view metric_endpoint_name(ChainMetric metric);
// Column name used in datasets, e.g. MarketPrice -> "price".
std::string_view metric_series_name(ChainMetric metric);
const std::vector<ChainMetric>& all_chain_metrics();

struct StatClientConfig {
    // Live endpoint root, e.g. https://api.blockchain.info
    std::string base_url;
    double timeout_seconds = 30.0;
    // When set, series are read from `<fixture_dir>/<metric>.csv` and the
    // network is never touched.
    std::string fixture_dir;

    bool fixture_mode() const noexcept { return !fixture_dir.empty(); }

    // JSON object with optional keys base_url, timeout_seconds, fixture_dir.
    static StatClientConfig from_json_file(const std::filesystem::path& path);
    // PIVOTREG_STAT_BASE_URL, PIVOTREG_STAT_TIMEOUT, PIVOTREG_STAT_FIXTURE_DIR.
    StatClientConfig with_env_overrides() const;
};

struct DateRange {
    Date first;
    Date last;  // inclusive
    bool contains(Date d) const noexcept { return d >= first && d <= last; }
};

// Fixture mode returns exactly load_series(fixture) restricted to `range`
// (when given). Live mode fetches `{base}/charts/{metric}?format=json`,
// buckets timestamps to UTC days and clips to `range`; any transport or
// decoding failure throws and no partial series escapes.
TimeSeries fetch_chain_stat(std::string_view metric, const std::optional<DateRange>& range,
                            const StatClientConfig& client);

// Decodes the charts JSON payload ({"values":[{"x":unix_seconds,"y":v}...]}).
TimeSeries parse_chart_json(std::string_view body, const std::string& name);

// ---------------------------------------------------------------------------
// Alignment.

struct AlignPolicy {
    enum class Kind { Intersect, ForwardFill };
    Kind kind = Kind::Intersect;
    int max_gap_days = 3;

    static AlignPolicy intersect() { return {}; }
    static AlignPolicy forward_fill(int max_gap_days = 3) { return {Kind::ForwardFill, max_gap_days}; }
};

// Intersect keeps dates present in every series. Forward-fill keeps the union
// of dates inside the span common to all series and fills a missing value
// from the series' previous observation, provided that observation is at most
// max_gap_days old.
Dataset align(const std::vector<TimeSeries>& series, const AlignPolicy& policy,
              const std::string& target_name);

// Loads `<dir>/<name>.csv` for the target and every feature and aligns them.
Dataset load_dataset_dir(const std::filesystem::path& dir, const std::string& target_name,
                         const std::vector<std::string>& features, const AlignPolicy& policy);

}  // namespace pivotreg
