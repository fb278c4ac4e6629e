#include "pivotreg/ingest.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <httplib.h>
#include <json.hpp>

#include "pivotreg/error.hpp"

namespace pivotreg {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

struct MetricInfo {
    ChainMetric metric;
    std::string_view endpoint;
    std::string_view series;
};

constexpr std::array<MetricInfo, 5> kMetrics{{
    {ChainMetric::TotalBitcoins, "total-bitcoins", "total_bitcoins"},
    {ChainMetric::MarketPrice, "market-price", "price"},
    {ChainMetric::TradeVolume, "trade-volume", "volume"},
    {ChainMetric::Difficulty, "difficulty", "difficulty"},
    {ChainMetric::NUniqueAddresses, "n-unique-addresses", "n_unique_addresses"},
}};

const MetricInfo& info(ChainMetric m) {
    for (const auto& i : kMetrics) {
        if (i.metric == m) return i;
    }
    throw UsageError("unknown chain metric");
}

TimeSeries clip(const TimeSeries& s, const std::optional<DateRange>& range) {
    if (!range) return s;
    std::vector<Point> kept;
    for (const auto& p : s.points()) {
        if (range->contains(p.date)) kept.push_back(p);
    }
    return TimeSeries(s.name(), std::move(kept));
}

// Splits "scheme://host[:port][/prefix]" into the part httplib wants for the
// client and the path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw UsageError("base_url must start with http:// or https://");
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

}  // namespace

// ---------------------------------------------------------------------------

TimeSeries parse_series_csv(std::string_view text, const std::string& name) {
    std::vector<Point> points;
    std::size_t line_no = 0;
    bool first_content = true;
    while (!text.empty()) {
        auto nl = text.find('\n');
        std::string_view line = trim(text.substr(0, nl));
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (line.empty()) continue;
        if (first_content) {
            first_content = false;
            if (line == "date,value") continue;
        }
        auto comma = line.find(',');
        if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
            throw ParseError("series '" + name + "': expected two fields `date,value`", line_no);
        }
        std::string_view date_text = trim(line.substr(0, comma));
        std::string_view value_text = trim(line.substr(comma + 1));
        Date date;
        try {
            date = parse_date(date_text);
        } catch (const ValidationError& e) {
            throw ParseError("series '" + name + "': " + e.what(), line_no);
        }
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(value_text.data(), value_text.data() + value_text.size(), value);
        if (value_text.empty() || ec != std::errc{} || ptr != value_text.data() + value_text.size()) {
            throw ParseError("series '" + name + "': malformed value '" + std::string(value_text) + "'",
                             line_no);
        }
        points.push_back({date, value});
    }
    return TimeSeries::from_unsorted(name, std::move(points));
}

std::string format_series_csv(const TimeSeries& series) {
    std::string out = "date,value\n";
    for (const auto& p : series.points()) {
        out += format_date(p.date);
        out += ',';
        out += format_double(p.value);
        out += '\n';
    }
    return out;
}

TimeSeries load_series(const std::filesystem::path& path, const std::string& name) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open series file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_series_csv(buf.str(), name);
}

void write_series(const std::filesystem::path& path, const TimeSeries& series) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw NotFoundError("cannot write series file " + path.string());
    out << format_series_csv(series);
}

// ---------------------------------------------------------------------------

ChainMetric parse_chain_metric(std::string_view metric) {
    for (const auto& i : kMetrics) {
        if (i.endpoint == metric) return i.metric;
    }
    std::string known;
    for (const auto& i : kMetrics) known += (known.empty() ? "" : ", ") + std::string(i.endpoint);
    throw UsageError("unknown metric '" + std::string(metric) + "' (known: " + known + ")");
}

std::string_view metric_endpoint_name(ChainMetric metric) { return info(metric).endpoint; }
std::string_view metric_series_name(ChainMetric metric) { return info(metric).series; }

const std::vector<ChainMetric>& all_chain_metrics() {
    static const std::vector<ChainMetric> all = [] {
        std::vector<ChainMetric> v;
        for (const auto& i : kMetrics) v.push_back(i.metric);
        return v;
    }();
    return all;
}

StatClientConfig StatClientConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("cannot open client config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("client config " + path.string() + ": " + e.what());
    }
    StatClientConfig cfg;
    cfg.base_url = j.value("base_url", cfg.base_url);
    cfg.timeout_seconds = j.value("timeout_seconds", cfg.timeout_seconds);
    cfg.fixture_dir = j.value("fixture_dir", cfg.fixture_dir);
    return cfg;
}

StatClientConfig StatClientConfig::with_env_overrides() const {
    StatClientConfig cfg = *this;
    if (const char* v = std::getenv("PIVOTREG_STAT_BASE_URL")) cfg.base_url = v;
    if (const char* v = std::getenv("PIVOTREG_STAT_FIXTURE_DIR")) cfg.fixture_dir = v;
    if (const char* v = std::getenv("PIVOTREG_STAT_TIMEOUT")) {
        char* end = nullptr;
        double t = std::strtod(v, &end);
        if (end == v || *end != '\0' || !(t > 0)) {
            throw UsageError("PIVOTREG_STAT_TIMEOUT must be a positive number of seconds");
        }
        cfg.timeout_seconds = t;
    }
    return cfg;
}

TimeSeries parse_chart_json(std::string_view body, const std::string& name) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("chart payload for '" + name + "' is not JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("values") || !j["values"].is_array()) {
        throw ValidationError("chart payload for '" + name + "' lacks a values array");
    }
    // Sub-daily samples collapse onto their UTC day; the latest one wins.
    std::map<long, std::pair<double, double>> by_day;  // day -> (x, y)
    for (const auto& v : j["values"]) {
        if (!v.is_object() || !v.contains("x") || !v.contains("y") || !v["x"].is_number() ||
            !v["y"].is_number()) {
            throw ValidationError("chart payload for '" + name + "' has a malformed point");
        }
        const double x = v["x"].get<double>();
        const double y = v["y"].get<double>();
        if (!std::isfinite(x) || !std::isfinite(y)) {
            throw ValidationError("chart payload for '" + name + "' has a non-finite point");
        }
        const auto key = static_cast<long>(std::floor(x / 86400.0));
        auto [it, fresh] = by_day.try_emplace(key, x, y);
        if (!fresh && x >= it->second.first) it->second = {x, y};
    }
    std::vector<Point> points;
    points.reserve(by_day.size());
    for (const auto& [day, sample] : by_day) points.push_back({date_from_day_number(day), sample.second});
    return TimeSeries(name, std::move(points));
}

TimeSeries fetch_chain_stat(std::string_view metric, const std::optional<DateRange>& range,
                            const StatClientConfig& client) {
    const ChainMetric m = parse_chain_metric(metric);
    const std::string endpoint(metric_endpoint_name(m));
    const std::string name(metric_series_name(m));

    if (client.fixture_mode()) {
        auto path = std::filesystem::path(client.fixture_dir) / (endpoint + ".csv");
        if (!std::filesystem::exists(path)) throw NotFoundError("fixture missing: " + path.string());
        return clip(load_series(path, name), range);
    }
    if (client.base_url.empty()) throw UsageError("stat client has neither base_url nor fixture_dir");

    auto [origin, prefix] = split_base_url(client.base_url);
    httplib::Client http(origin);
    const auto secs = static_cast<time_t>(client.timeout_seconds);
    const auto usecs = static_cast<time_t>((client.timeout_seconds - static_cast<double>(secs)) * 1e6);
    http.set_connection_timeout(secs, usecs);
    http.set_read_timeout(secs, usecs);
    http.set_follow_location(true);

    std::string path = prefix + "/charts/" + endpoint + "?format=json&sampled=false&timespan=all";
    if (range) path += "&start=" + format_date(range->first);
    auto res = http.Get(path);
    if (!res) {
        throw TransportError("GET " + origin + path + " failed: " + httplib::to_string(res.error()), 0);
    }
    if (res->status != 200) {
        throw TransportError("GET " + origin + path + " returned HTTP " + std::to_string(res->status),
                             res->status);
    }
    return clip(parse_chart_json(res->body, name), range);
}

// ---------------------------------------------------------------------------

Dataset align(const std::vector<TimeSeries>& series, const AlignPolicy& policy,
              const std::string& target_name) {
    if (series.empty()) throw AlignmentError("align needs at least one series");
    if (policy.kind == AlignPolicy::Kind::ForwardFill && policy.max_gap_days < 0) {
        throw UsageError("max_gap_days must be non-negative");
    }
    std::set<std::string> names;
    for (const auto& s : series) {
        if (!names.insert(s.name()).second) throw AlignmentError("duplicate series name '" + s.name() + "'");
        if (s.empty()) throw AlignmentError("series '" + s.name() + "' is empty");
    }

    Dataset out;
    out.target_name = target_name;

    if (policy.kind == AlignPolicy::Kind::Intersect) {
        std::vector<Date> common = series.front().dates();
        for (std::size_t k = 1; k < series.size(); ++k) {
            auto other = series[k].dates();
            std::vector<Date> next;
            std::set_intersection(common.begin(), common.end(), other.begin(), other.end(),
                                  std::back_inserter(next));
            common = std::move(next);
        }
        if (common.empty()) throw AlignmentError("series share no common dates");
        for (const auto& s : series) {
            std::vector<double> col;
            col.reserve(common.size());
            auto it = s.points().begin();
            for (Date d : common) {
                while (it->date < d) ++it;
                col.push_back(it->value);
            }
            out.columns.emplace(s.name(), std::move(col));
        }
        out.dates = std::move(common);
    } else {
        Date lo = series.front().points().front().date;
        Date hi = series.front().points().back().date;
        for (const auto& s : series) {
            lo = std::max(lo, s.points().front().date);
            hi = std::min(hi, s.points().back().date);
        }
        if (lo > hi) throw AlignmentError("series spans do not overlap");
        std::set<Date> grid;
        for (const auto& s : series) {
            for (const auto& p : s.points()) {
                if (p.date >= lo && p.date <= hi) grid.insert(p.date);
            }
        }
        out.dates.assign(grid.begin(), grid.end());
        for (const auto& s : series) {
            std::vector<double> col;
            col.reserve(out.dates.size());
            const auto& pts = s.points();
            std::size_t i = 0;
            for (Date d : out.dates) {
                while (i + 1 < pts.size() && pts[i + 1].date <= d) ++i;
                // pts[i] is the latest observation on or before d; it exists
                // because d >= lo >= the series' first date.
                const long gap = day_number(d) - day_number(pts[i].date);
                if (gap > policy.max_gap_days) {
                    throw AlignmentError("series '" + s.name() + "': gap of " + std::to_string(gap) +
                                         " days at " + format_date(d) + " exceeds max_gap_days=" +
                                         std::to_string(policy.max_gap_days));
                }
                col.push_back(pts[i].value);
            }
            out.columns.emplace(s.name(), std::move(col));
        }
    }
    out.validate();
    return out;
}

Dataset load_dataset_dir(const std::filesystem::path& dir, const std::string& target_name,
                         const std::vector<std::string>& features, const AlignPolicy& policy) {
    std::vector<std::string> names{target_name};
    for (const auto& f : features) {
        if (std::find(names.begin(), names.end(), f) == names.end()) names.push_back(f);
    }
    std::vector<TimeSeries> series;
    for (const auto& n : names) {
        auto path = dir / (n + ".csv");
        if (!std::filesystem::exists(path)) throw NotFoundError("series file missing: " + path.string());
        series.push_back(load_series(path, n));
    }
    return align(series, policy, target_name);
}

}  // namespace pivotreg
