#include "pivotreg/options.hpp"

#include <cmath>

#include "pivotreg/error.hpp"

namespace pivotreg {

namespace {

double number(const nlohmann::json& j, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_number()) throw UsageError(key + " must be a number");
    return v.get<double>();
}

long long integer(const nlohmann::json& j, const std::string& key) {
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw UsageError(key + " must be an integer");
    return v.get<long long>();
}

}  // namespace

std::vector<std::string> parse_name_list(const nlohmann::json& value, const std::string& key) {
    std::vector<std::string> out;
    if (value.is_array()) {
        for (const auto& v : value) {
            if (!v.is_string()) throw UsageError(key + " entries must be strings");
            out.push_back(v.get<std::string>());
        }
    } else if (value.is_string()) {
        std::string s = value.get<std::string>();
        std::size_t start = 0;
        while (start <= s.size()) {
            auto comma = s.find(',', start);
            auto item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (!item.empty()) out.push_back(item);
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    } else {
        throw UsageError(key + " must be a list or a comma-separated string");
    }
    if (out.empty()) throw UsageError(key + " must name at least one entry");
    return out;
}

DataSelection selection_from_json(const nlohmann::json& j) {
    DataSelection s;
    if (j.contains("target")) {
        if (!j["target"].is_string() || j["target"].get<std::string>().empty()) {
            throw UsageError("target must be a non-empty string");
        }
        s.target = j["target"].get<std::string>();
    }
    if (j.contains("features")) s.features = parse_name_list(j["features"], "features");
    if (j.contains("align")) {
        const auto mode = j["align"].is_string() ? j["align"].get<std::string>() : "";
        if (mode == "intersect") {
            s.align = AlignPolicy::intersect();
        } else if (mode == "ffill") {
            s.align = AlignPolicy::forward_fill();
        } else {
            throw UsageError("align must be 'intersect' or 'ffill'");
        }
    }
    if (j.contains("max_gap")) {
        const auto gap = integer(j, "max_gap");
        if (gap < 0) throw UsageError("max_gap must be >= 0");
        s.align.max_gap_days = static_cast<int>(gap);
    }
    return s;
}

ExperimentOptions options_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw UsageError("options must be a JSON object");
    ExperimentOptions o;
    o.features = selection_from_json(j).features;

    if (j.contains("lambda") && !j["lambda"].is_null()) {
        const double l = number(j, "lambda");
        if (!(l >= 0.0) || !std::isfinite(l)) throw UsageError("lambda must be >= 0");
        o.lambda = l;
    }
    if (j.contains("lambda_grid")) {
        const auto& g = j["lambda_grid"];
        std::vector<double> grid;
        if (g.is_array()) {
            for (const auto& v : g) {
                if (!v.is_number()) throw UsageError("lambda_grid entries must be numbers");
                grid.push_back(v.get<double>());
            }
        } else {
            for (const auto& s : parse_name_list(g, "lambda_grid")) {
                try {
                    std::size_t used = 0;
                    grid.push_back(std::stod(s, &used));
                    if (used != s.size()) throw std::invalid_argument(s);
                } catch (const std::exception&) {
                    throw UsageError("lambda_grid entry '" + s + "' is not a number");
                }
            }
        }
        if (grid.empty()) throw UsageError("lambda_grid must not be empty");
        for (double l : grid) {
            if (!(l >= 0.0) || !std::isfinite(l)) throw UsageError("lambda_grid entries must be >= 0");
        }
        o.lambda_grid = std::move(grid);
    }
    if (j.contains("folds")) {
        const auto f = integer(j, "folds");
        if (f < 2) throw UsageError("folds must be >= 2");
        o.n_folds = static_cast<int>(f);
    }
    if (j.contains("max_iter")) {
        const auto m = integer(j, "max_iter");
        if (m < 1) throw UsageError("max_iter must be >= 1");
        o.lasso.max_iter = static_cast<int>(m);
    }
    if (j.contains("tol")) {
        const double t = number(j, "tol");
        if (!(t > 0.0)) throw UsageError("tol must be > 0");
        o.lasso.tol = t;
    }
    if (j.contains("split") && !j["split"].is_null()) {
        if (!j["split"].is_string()) throw UsageError("split must be a YYYY-MM-DD string");
        try {
            o.split = parse_date(j["split"].get<std::string>());
        } catch (const ValidationError& e) {
            throw UsageError(std::string("split: ") + e.what());
        }
    }
    if (j.contains("seed")) {
        const auto& v = j["seed"];
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw UsageError("seed must be a non-negative integer");
        }
        o.mcmc.seed = v.get<std::uint64_t>();
    }
    if (j.contains("chains")) {
        const auto c = integer(j, "chains");
        if (c < 2) throw UsageError("chains must be >= 2");
        o.mcmc.n_chains = static_cast<int>(c);
    }
    if (j.contains("samples")) {
        const auto s = integer(j, "samples");
        if (s < 100) throw UsageError("samples must be >= 100");
        o.mcmc.n_samples = static_cast<int>(s);
    }
    if (j.contains("warmup")) {
        const auto w = integer(j, "warmup");
        if (w < 0) throw UsageError("warmup must be >= 0");
        o.mcmc.n_warmup = static_cast<int>(w);
    }
    if (j.contains("fast")) {
        if (!j["fast"].is_boolean()) throw UsageError("fast must be a boolean");
        o.run_bayes = !j["fast"].get<bool>();
    }
    if (j.contains("var_level")) {
        const double v = number(j, "var_level");
        if (!(v > 0.0 && v < 1.0)) throw UsageError("var_level must lie in (0, 1)");
        o.var_level = v;
    }
    if (j.contains("predictive_draws")) {
        const auto d = integer(j, "predictive_draws");
        if (d < 1) throw UsageError("predictive_draws must be >= 1");
        o.predictive_draws = static_cast<int>(d);
    }
    return o;
}

}  // namespace pivotreg
