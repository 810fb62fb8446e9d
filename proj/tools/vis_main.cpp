#include "CLI11.hpp"
#include "experiment.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using vis::cli::json;

namespace {

constexpr int kExitPass = 0;
constexpr int kExitVerdict = 1;
constexpr int kExitError = 2;

struct Outputs {
  std::string report = "report.json";
  std::string csv = "rays.csv";
  std::string metadata = "metadata.json";
};

Outputs output_names(const json& config) {
  Outputs o;
  if (!config.is_object() || !config.contains("output") || !config["output"].is_object()) return o;
  const json& out = config["output"];
  if (out.contains("report")) o.report = out["report"].get<std::string>();
  if (out.contains("csv")) o.csv = out["csv"].get<std::string>();
  if (out.contains("metadata")) o.metadata = out["metadata"].get<std::string>();
  return o;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw vis::Error(vis::ErrorCode::ConfigError, "cannot write '" + path.string() + "'");
  f << text;
}

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

int fail(const std::string& out_dir, const std::string& code, const std::string& message) {
  const json err = vis::cli::error_json(code, message);
  std::cout << err.dump(2) << "\n";
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (!ec) {
      std::ofstream f(fs::path(out_dir) / "error.json");
      f << err.dump(2) << "\n";
    }
  }
  return kExitError;
}

int run(vis::cli::Command command, const std::string& config_path, const std::string& out_dir,
        std::optional<std::uint64_t> seed, int jobs) {
  const auto start = std::chrono::steady_clock::now();
  json config;
  vis::cli::RunResult result;
  Outputs names;
  try {
    config = vis::cli::load_config(config_path);
    result = vis::cli::run_experiment(config, {command, seed, jobs});
    names = output_names(config);
    fs::create_directories(out_dir);
    write_file(fs::path(out_dir) / names.report, result.report.dump(2) + "\n");
    if (!result.csv.empty()) write_file(fs::path(out_dir) / names.csv, result.csv);
  } catch (const vis::Error& e) {
    return fail(out_dir, vis::to_string(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(out_dir, "ConfigError", e.what());
  } catch (const std::exception& e) {
    return fail(out_dir, "InternalError", e.what());
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const json meta = {{"schema_version", vis::cli::kSchemaVersion},
                     {"command", vis::cli::to_string(command)},
                     {"config", config_path},
                     {"started_at", utc_now()},
                     {"duration_seconds", seconds},
                     {"jobs", jobs},
                     {"report", names.report},
                     {"csv", result.csv.empty() ? json(nullptr) : json(names.csv)}};
  write_file(fs::path(out_dir) / names.metadata, meta.dump(2) + "\n");
  std::cout << (result.pass ? "PASS" : "FAIL") << " " << (fs::path(out_dir) / names.report).string() << "\n";
  return result.pass ? kExitPass : kExitVerdict;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sensitivity analysis and verification for parametrized variational inequalities"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int jobs = 1;
  std::string filter;

  struct Sub {
    const char* name;
    const char* help;
    vis::cli::Command command;
  };
  const Sub subs[] = {
      {"solve", "Solve the VI at each ray's base parameter", vis::cli::Command::Solve},
      {"derivative", "Solve the derivative problem for each ray", vis::cli::Command::Derivative},
      {"fd", "Finite-difference convergence along each ray", vis::cli::Command::Fd},
      {"verify", "fd plus necessary conditions and instance-level checks", vis::cli::Command::Verify},
  };
  std::vector<std::pair<CLI::App*, vis::cli::Command>> runners;
  CLI::Option* seed_opt = nullptr;
  std::vector<CLI::Option*> seed_opts;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    sub->add_option("--config", config_path, "Experiment config (JSON)")->required();
    sub->add_option("--out", out_dir, "Output directory")->capture_default_str();
    seed_opt = sub->add_option("--seed", seed, "Override the config seed");
    seed_opts.push_back(seed_opt);
    sub->add_option("--jobs", jobs, "Worker threads for independent rays")->check(CLI::PositiveNumber)->capture_default_str();
    runners.emplace_back(sub, s.command);
  }
  CLI::App* cat = app.add_subcommand("catalog", "List built-in nonsmooth kinds, sets and templates");
  cat->add_option("--filter", filter, "Substring of the entry id");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return e.get_exit_code() == 0 ? app.exit(e) : (app.exit(e), kExitError);
  }

  if (cat->parsed()) {
    std::cout << vis::cli::catalog(filter).dump(2) << "\n";
    return kExitPass;
  }
  for (std::size_t i = 0; i < runners.size(); ++i) {
    if (!runners[i].first->parsed()) continue;
    std::optional<std::uint64_t> s;
    if (seed_opts[i]->count() > 0) s = seed;
    return run(runners[i].second, config_path, out_dir, s, jobs);
  }
  return kExitError;
}
