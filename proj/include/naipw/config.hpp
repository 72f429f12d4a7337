#pragma once

// Run configuration: one JSON document with sections mirroring the module
// types, plus dotted `key=value` overrides.
//
//   {
//     "dgp":      { "n": 750, "block_sizes": [8, 8, 8, 8], "rho": 0.5, "seed": 1, ... },
//     "hyper":    { "hidden_widths": ["p", "p", "p"], "l1_outcome": 0.01, ... },
//     "grid":     { "l1": [0, 0.01, 0.1], "widths": [["p","p","p"], ["q","p","q"]] },
//     "crossfit": { "folds": 1, "stratify": true },
//     "mc":       { "m": 100, "base_seed": 2024, "oracle_mode": false, "cap": 10,
//                   "estimators": ["aipw", "naipw"], "workers": 1 },
//     "stress":   { "n": 1000, "s_grid": [2, 4, 8, 12], "second_unit_gap": 2, "seed": 7 },
//     "probe":    { "n": 50000, "eps_grid": [0, 0.01, 0.02, 0.03, 0.04], "seed": 11 }
//   }
//
// Width entries may be integers, "p" (covariate count) or "q" (p / 10,
// rounded, at least 1). A grid L1 value sets both penalties.

#include <naipw/harness.hpp>

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace naipw {

struct RunConfig {
  McConfig mc;
  StressConfig stress;
  ProbeConfig probe;
  nlohmann::json source;  // the document after overrides
};

// Sets a dotted path ("dgp.n") to `value`, parsed as JSON when it parses and
// kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value);

std::vector<Index> resolve_widths(const nlohmann::json& widths, Index p);

// Throws ValidationError on any schema or value problem.
RunConfig parse_config(const nlohmann::json& doc);
RunConfig load_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides);

// FNV-1a over the canonical (sorted-key, compact) serialization.
std::string config_digest(const nlohmann::json& doc);

}  // namespace naipw
