#include <naipw/config.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace naipw {

void apply_override(nlohmann::json& doc, const std::string& key, const std::string& value) {
  if (key.empty()) throw ValidationError("empty override key");
  nlohmann::json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ValidationError("malformed override key: " + key);
    if (!node->is_object()) {
      if (!node->is_null()) throw ValidationError("override " + key + " descends into a non-object");
      *node = nlohmann::json::object();
    }
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  nlohmann::json parsed = nlohmann::json::parse(value, nullptr, false);
  *node = parsed.is_discarded() ? nlohmann::json(value) : parsed;
}

std::vector<Index> resolve_widths(const nlohmann::json& widths, Index p) {
  if (!widths.is_array()) throw ValidationError("hidden_widths must be a list");
  std::vector<Index> out;
  for (const auto& w : widths) {
    if (w.is_number_integer()) {
      out.push_back(w.get<Index>());
    } else if (w.is_string() && w.get<std::string>() == "p") {
      out.push_back(p);
    } else if (w.is_string() && w.get<std::string>() == "q") {
      out.push_back(std::max<Index>(1, static_cast<Index>(std::lround(static_cast<double>(p) / 10.0))));
    } else {
      throw ValidationError("width entries must be integers, \"p\" or \"q\"");
    }
  }
  return out;
}

namespace {

void reject_unknown(const nlohmann::json& section, const char* name, std::initializer_list<const char*> keys) {
  if (section.is_null()) return;
  if (!section.is_object()) throw ValidationError(std::string("section '") + name + "' must be an object");
  for (const auto& [k, v] : section.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) throw ValidationError(std::string("unknown key '") + k + "' in section '" + name + "'");
  }
}

nlohmann::json section(const nlohmann::json& doc, const char* name) {
  return doc.contains(name) ? doc.at(name) : nlohmann::json::object();
}

}  // namespace

RunConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [k, v] : doc.items()) {
    if (k != "dgp" && k != "hyper" && k != "grid" && k != "crossfit" && k != "mc" && k != "stress" && k != "probe")
      throw ValidationError("unknown config section '" + k + "'");
  }
  try {
    RunConfig cfg;
    cfg.source = doc;

    const nlohmann::json dgp = section(doc, "dgp");
    reject_unknown(dgp, "dgp",
                   {"n", "block_sizes", "rho", "gamma_c", "gamma_c_prime", "gamma_y", "gamma_iv", "beta_true",
                    "noise_sd", "link_fraction", "standardize_links", "seed"});
    cfg.mc.dgp = dgp.get<DgpSpec>();
    const Index p = cfg.mc.dgp.p();

    nlohmann::json hyper = section(doc, "hyper");
    reject_unknown(hyper, "hyper",
                   {"hidden_widths", "l1_outcome", "l1_propensity", "learning_rate", "momentum_beta1", "beta2",
                    "adam_eps", "epochs", "batch_size", "clamp_eps", "seed"});
    const nlohmann::json base_widths =
        hyper.contains("hidden_widths") ? hyper["hidden_widths"] : nlohmann::json::array({"p", "p", "p"});
    hyper["hidden_widths"] = resolve_widths(base_widths, p);
    const NetHyper base = hyper.get<NetHyper>();

    const nlohmann::json grid = section(doc, "grid");
    reject_unknown(grid, "grid", {"l1", "widths"});
    std::vector<double> l1s;
    if (grid.contains("l1")) l1s = grid["l1"].get<std::vector<double>>();
    std::vector<std::vector<Index>> widths;
    if (grid.contains("widths"))
      for (const auto& w : grid["widths"]) widths.push_back(resolve_widths(w, p));
    if (l1s.empty()) l1s.push_back(std::nan(""));
    if (widths.empty()) widths.push_back(base.hidden_widths);
    cfg.mc.hyper_grid.clear();
    for (const auto& w : widths) {
      for (double l1 : l1s) {
        NetHyper h = base;
        h.hidden_widths = w;
        if (!std::isnan(l1)) h.l1_outcome = h.l1_propensity = l1;
        cfg.mc.hyper_grid.push_back(h);
      }
    }

    const nlohmann::json crossfit = section(doc, "crossfit");
    reject_unknown(crossfit, "crossfit", {"folds", "stratify"});
    cfg.mc.crossfit = CrossfitOptions{1, true};
    cfg.mc.crossfit.folds = crossfit.value("folds", 1);
    cfg.mc.crossfit.stratify = crossfit.value("stratify", true);

    const nlohmann::json mc = section(doc, "mc");
    reject_unknown(mc, "mc", {"m", "base_seed", "oracle_mode", "cap", "estimators", "workers"});
    cfg.mc.m = mc.value("m", cfg.mc.m);
    cfg.mc.base_seed = mc.value("base_seed", cfg.mc.base_seed);
    cfg.mc.oracle_mode = mc.value("oracle_mode", cfg.mc.oracle_mode);
    cfg.mc.cap = mc.value("cap", cfg.mc.cap);
    cfg.mc.estimators = mc.value("estimators", cfg.mc.estimators);
    cfg.mc.workers = mc.value("workers", cfg.mc.workers);
    cfg.mc.validate();

    const nlohmann::json stress = section(doc, "stress");
    reject_unknown(stress, "stress", {"n", "s_grid", "second_unit_gap", "seed"});
    cfg.stress.dgp = cfg.mc.dgp;
    cfg.stress.dgp.n = stress.value("n", Index{1000});
    cfg.stress.s_grid = stress.value("s_grid", cfg.stress.s_grid);
    cfg.stress.second_unit_gap = stress.value("second_unit_gap", cfg.stress.second_unit_gap);
    cfg.stress.seed = stress.value("seed", cfg.stress.seed);
    cfg.stress.dgp.validate();
    if (cfg.stress.s_grid.empty()) throw ValidationError("stress.s_grid is empty");
    if (!(cfg.stress.second_unit_gap > 0.0)) throw ValidationError("stress.second_unit_gap must be positive");

    const nlohmann::json probe = section(doc, "probe");
    reject_unknown(probe, "probe", {"n", "eps_grid", "seed"});
    cfg.probe.dgp = cfg.mc.dgp;
    cfg.probe.dgp.n = probe.value("n", Index{50000});
    cfg.probe.eps_grid = probe.value("eps_grid", cfg.probe.eps_grid);
    cfg.probe.seed = probe.value("seed", cfg.probe.seed);
    cfg.probe.dgp.validate();
    if (cfg.probe.eps_grid.size() < 2 || cfg.probe.eps_grid.front() != 0.0)
      throw ValidationError("probe.eps_grid must start at 0 and have at least two points");
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config value has the wrong type: ") + e.what());
  }
}

RunConfig load_config(const std::string& path, const std::vector<std::pair<std::string, std::string>>& overrides) {
  nlohmann::json doc = nlohmann::json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file: " + path);
    doc = nlohmann::json::parse(in, nullptr, false, true);
    if (doc.is_discarded()) throw ValidationError("config file is not valid JSON: " + path);
  }
  for (const auto& [k, v] : overrides) apply_override(doc, k, v);
  return parse_config(doc);
}

std::string config_digest(const nlohmann::json& doc) {
  const std::string canonical = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace naipw
