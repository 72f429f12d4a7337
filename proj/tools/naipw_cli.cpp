// naipw: simulate | stress | probe | estimate | generate
//
// Dotted flags (`--dgp.n=500`, `--mc.m=2`) override config keys and win over
// the file. Every invocation writes <out>/manifest.json, including failures.
// Exit codes: 0 ok, 2 config, 3 data, 4 internal.

#include <naipw/config.hpp>
#include <naipw/csv.hpp>
#include <naipw/variance.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#ifndef NAIPW_VERSION
#define NAIPW_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum Exit { ok = 0, config_error = 2, data_error = 3, internal_error = 4 };

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Manifest {
  json doc = json::object();
  fs::path dir;

  void add_output(const fs::path& p) { doc["outputs"].push_back(p.filename().string()); }

  void write() const {
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::ofstream out(dir / "manifest.json");
    if (!out) {
      std::fprintf(stderr, "naipw: cannot write manifest to %s\n", dir.string().c_str());
      return;
    }
    out << doc.dump(2) << '\n';
  }
};

std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file " + path.string());
  return out;
}

int resolve_workers(int flag, const json& source, int config_value) {
  if (flag > 0) return flag;
  if (source.contains("mc") && source["mc"].contains("workers")) return config_value;
  if (const char* env = std::getenv("NAIPW_WORKERS")) {
    char* end = nullptr;
    const long w = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && w > 0) return static_cast<int>(w);
    throw naipw::ValidationError(std::string("NAIPW_WORKERS is not a positive integer: ") + env);
  }
  return config_value;
}

void print_estimates(std::ostream& out, const std::vector<naipw::EstimatorResult<double>>& results) {
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %-8s %14s %14s %8s\n", "estimator", "scheme", "beta_hat", "sigma_hat", "n");
  out << line;
  for (const auto& r : results) {
    char se[32] = "";
    if (r.sigma_hat) std::snprintf(se, sizeof se, "%.6f", *r.sigma_hat);
    std::snprintf(line, sizeof line, "%-8s %-8s %14.6f %14s %8lld%s\n", r.estimator.c_str(),
                  r.scheme.empty() ? "-" : r.scheme.c_str(), r.beta_hat, se,
                  static_cast<long long>(r.n_used), r.experimental ? "  (experimental)" : "");
    out << line;
  }
}

void write_estimates_csv(std::ostream& out, const std::vector<naipw::EstimatorResult<double>>& results) {
  out << "estimator,scheme,beta_hat,sigma_hat,n\n";
  for (const auto& r : results) {
    out << r.estimator << ',' << r.scheme << ',' << naipw::csv::format_double(r.beta_hat)
        << ',' << (r.sigma_hat ? naipw::csv::format_double(*r.sigma_hat) : "") << ',' << r.n_used << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  // Split dotted overrides off before CLI11 sees the arguments.
  std::vector<std::pair<std::string, std::string>> overrides;
  std::vector<char*> args{argv[0]};
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    const auto eq = a.find('=');
    if (a.rfind("--", 0) == 0 && eq != std::string::npos && a.substr(2, eq - 2).find('.') != std::string::npos) {
      overrides.emplace_back(a.substr(2, eq - 2), a.substr(eq + 1));
    } else {
      args.push_back(argv[i]);
    }
  }

  CLI::App app{"normalized AIPW estimation and simulation studies"};
  app.set_version_flag("--version", NAIPW_VERSION);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "naipw-out";
  int workers = 0;
  app.add_option("-c,--config", config_path, "JSON config file");
  app.add_option("-o,--out", out_dir, "output directory");
  app.add_option("-w,--workers", workers, "worker threads (default: $NAIPW_WORKERS, then 1)")->check(CLI::PositiveNumber);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo study over the configured grid");
  auto* stress = app.add_subcommand("stress", "near-zero propensity injection");
  std::vector<double> s_values;
  stress->add_option("--s", s_values, "exponent(s) s; g of the chosen unit becomes 10^-s");
  auto* probe = app.add_subcommand("probe", "numeric orthogonality check");
  auto* estimate = app.add_subcommand("estimate", "all estimators on a y,a,w* CSV");
  std::string data_path;
  bool oracle = false;
  estimate->add_option("data", data_path, "input CSV")->required();
  estimate->add_flag("--oracle", oracle, "use g_true/q1_true/q0_true columns as nuisances");
  auto* generate = app.add_subcommand("generate", "draw one synthetic dataset to CSV");

  for (auto* sub : {simulate, stress, probe, estimate, generate}) sub->fallthrough();

  Manifest manifest;
  manifest.doc["tool"] = "naipw";
  manifest.doc["version"] = NAIPW_VERSION;
  manifest.doc["started"] = utc_now();
  manifest.doc["outputs"] = json::array();
  manifest.doc["config_digest"] = nullptr;
  manifest.doc["seed"] = nullptr;
  manifest.doc["failures"] = json::object();
  manifest.dir = out_dir;

  auto finish = [&](int code, const std::string& error) {
    manifest.dir = out_dir;
    manifest.doc["finished"] = utc_now();
    manifest.doc["exit_code"] = code;
    manifest.doc["status"] = code == ok ? "ok" : "error";
    if (!error.empty()) {
      manifest.doc["error"] = error;
      std::fprintf(stderr, "naipw: %s\n", error.c_str());
    }
    manifest.write();
    return code;
  };

  try {
    app.parse(static_cast<int>(args.size()), args.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return finish(config_error, std::string("command line: ") + e.what());
  }

  const std::string command = app.get_subcommands().front()->get_name();
  manifest.doc["command"] = command;
  manifest.doc["overrides"] = json::object();
  for (const auto& [k, v] : overrides) manifest.doc["overrides"][k] = v;

  try {
    naipw::RunConfig cfg = naipw::load_config(config_path, overrides);
    if (!s_values.empty()) cfg.stress.s_grid = s_values;
    cfg.mc.workers = resolve_workers(workers, cfg.source, cfg.mc.workers);
    manifest.doc["config_digest"] = naipw::config_digest(cfg.source);
    manifest.doc["workers"] = cfg.mc.workers;

    const fs::path dir = out_dir;
    fs::create_directories(dir);

    if (command == "simulate") {
      manifest.doc["seed"] = cfg.mc.base_seed;
      const naipw::StudyResult study = naipw::run_study(cfg.mc);
      {
        auto out = open_output(dir / "summary.csv");
        naipw::write_summary_csv(out, study.summary);
      }
      manifest.add_output(dir / "summary.csv");
      {
        auto out = open_output(dir / "raw.csv");
        naipw::write_raw_csv(out, cfg.mc, study.raw);
      }
      manifest.add_output(dir / "raw.csv");
      json flagged = json::array();
      for (const auto& row : study.summary)
        if (row.flagged && row.estimator == study.summary.front().estimator) flagged.push_back(row.cell);
      manifest.doc["failures"] = {{"replications", study.failures()}, {"flagged_cells", flagged}};
      std::printf("%zu summary rows, %d failed replications -> %s\n", study.summary.size(), study.failures(),
                  (dir / "summary.csv").string().c_str());
    } else if (command == "stress") {
      manifest.doc["seed"] = cfg.stress.seed;
      const naipw::StressReport report = naipw::positivity_stress(cfg.stress);
      auto out = open_output(dir / "stress.csv");
      naipw::write_stress_csv(out, report);
      manifest.add_output(dir / "stress.csv");
      std::printf("%-5s %6s %6s %14s %14s %14s %14s %10s\n", "units", "s", "t", "aipw", "naipw", "naipw_arm1",
                  "arm1_closed", "rel_err");
      for (const auto& r : report.rows)
        std::printf("%-5d %6g %6g %14.6g %14.6g %14.6g %14.6g %10.3g\n", r.units, r.s, r.t, r.aipw_beta, r.naipw_beta,
                    r.naipw_arm1, r.naipw_arm1_closed, r.closed_rel_error);
      manifest.doc["failures"] = {{"replications", 0}};
    } else if (command == "probe") {
      manifest.doc["seed"] = cfg.probe.seed;
      const naipw::ProbeReport report = naipw::orthogonality_probe(cfg.probe);
      auto out = open_output(dir / "probe.csv");
      naipw::write_probe_csv(out, report);
      manifest.add_output(dir / "probe.csv");
      std::printf("%-6s %-10s %14s %14s\n", "est", "direction", "moment(0)", "slope");
      for (const auto& r : report.rows)
        std::printf("%-6s %-10s %14.6g %14.6g\n", r.estimator.c_str(), naipw::to_string(r.direction).c_str(),
                    r.moment_at_zero, r.slope);
      manifest.doc["failures"] = {{"replications", 0}};
    } else if (command == "estimate") {
      std::ifstream in(data_path);
      if (!in) throw naipw::DataError("cannot read data file: " + data_path);
      const naipw::Dataset data = naipw::read_dataset_csv(in);
      manifest.doc["input"] = data_path;
      naipw::NuisanceEstimates nuis;
      if (oracle) {
        if (!data.truth) throw naipw::DataError("--oracle needs g_true, q1_true and q0_true columns");
        nuis = naipw::oracle_nuisances(data);
      } else {
        const naipw::NetHyper& hyper = cfg.mc.hyper_grid.front();
        manifest.doc["seed"] = hyper.seed;
        const naipw::FoldPlan plan = naipw::split_folds(data.size(), cfg.mc.crossfit.folds, hyper.seed,
                                                        cfg.mc.crossfit.stratify ? &data.A : nullptr);
        nuis = naipw::crossfit_nuisances(data, hyper, plan);
      }
      const auto results = naipw::estimate_all(data, nuis);
      print_estimates(std::cout, results);
      auto out = open_output(dir / "estimates.csv");
      write_estimates_csv(out, results);
      manifest.add_output(dir / "estimates.csv");
      manifest.doc["failures"] = {{"replications", 0}};
    } else if (command == "generate") {
      manifest.doc["seed"] = cfg.mc.dgp.seed;
      const naipw::Dataset data = naipw::gen_dataset(cfg.mc.dgp);
      auto out = open_output(dir / "dataset.csv");
      naipw::write_dataset_csv(out, data, true);
      manifest.add_output(dir / "dataset.csv");
      manifest.doc["failures"] = {{"replications", 0}};
    }
  } catch (const naipw::ValidationError& e) {
    return finish(config_error, std::string("config error: ") + e.what());
  } catch (const naipw::DataError& e) {
    return finish(data_error, std::string("data error: ") + e.what());
  } catch (const std::exception& e) {
    return finish(internal_error, std::string("internal error: ") + e.what());
  }
  return finish(ok, "");
}
