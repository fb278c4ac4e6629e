#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "pivotreg/eval.hpp"
#include "pivotreg/ingest.hpp"

namespace pivotreg {

// Which series to load and how to align them.
struct DataSelection {
    std::string target = "price";
    std::vector<std::string> features = default_features();
    AlignPolicy align;
};

// Both the CLI and the HTTP service describe a run with the same flat JSON
// object (keys are the CLI long flag names with '-' replaced by '_'), so the
// two entry points cannot drift apart. Missing keys take library defaults;
// bad values throw UsageError naming the key.
//
//   target, features, align ("intersect" | "ffill"), max_gap
//   lambda, lambda_grid, folds, max_iter, tol, split
//   seed, chains, samples, warmup, fast, var_level, predictive_draws
DataSelection selection_from_json(const nlohmann::json& j);
ExperimentOptions options_from_json(const nlohmann::json& j);

// Accepts either a JSON array or a comma-separated string.
std::vector<std::string> parse_name_list(const nlohmann::json& value, const std::string& key);

}  // namespace pivotreg
