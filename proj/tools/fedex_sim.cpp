// fedex-sim: command-line front end for the federated-learning simulator.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include "fedex/config.hpp"
#include "fedex/protocols.hpp"
#include "fedex/report.hpp"

namespace {

using namespace fedex;

// Trailing `--key value` / `--key=value` pairs override config keys.
void apply_overrides(SimConfig& cfg, const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    std::string a = args[i];
    if (a.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + a + "'");
    a = a.substr(2);
    std::string value;
    if (const auto eq = a.find('='); eq != std::string::npos) {
      value = a.substr(eq + 1);
      a = a.substr(0, eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("--" + a + ": missing value");
      value = args[++i];
    }
    apply_setting(cfg, a, value);
  }
  cfg.validate();
}

void print_header(const SimConfig& cfg) {
  const double scale = cfg.model_bytes / (static_cast<double>(cfg.task.param_dim()) * 8.0);
  std::cout << "fedex-sim: " << cfg.n_devices() << " devices, P=" << cfg.participants << ", K=" << cfg.local_iters
            << ", U=" << cfg.ceiling << ", task=" << to_string(cfg.task.kind) << " (" << cfg.task.param_dim()
            << " params), seed=" << cfg.seed << "\n"
            << "model bytes " << cfg.model_bytes << " = " << scale
            << " x (param count x 8); rates derived as model_bytes / t_comm\n";
}

void print_summary(const Summary& s) {
  std::cout << to_string(s.protocol) << ": reached=" << (s.reached ? "yes" : "no") << " OL=" << s.ol_s / 3600.0
            << " h NR=" << s.nr << " max_acc=" << s.max_accuracy << '\n';
}

int cmd_run(const std::string& path, const std::vector<std::string>& extra) {
  SimConfig cfg = load_config(path);
  apply_overrides(cfg, extra);
  print_header(cfg);
  ExperimentResult res = run_experiment(cfg);
  if (cfg.protocol == Protocol::fedavg && res.summary.reached) res.summary.speedup_vs_reference = 1.0;
  write_run_outputs(cfg.output_dir, cfg, res);
  print_summary(res.summary);
  std::cout << "wrote " << cfg.output_dir << '\n';
  return 0;
}

int cmd_scenario(const std::string& name, const std::string& protocol, const std::vector<std::string>& extra,
                 std::optional<std::uint64_t> seed) {
  SimConfig cfg = scenario(name);
  if (seed) cfg.seed = *seed;
  apply_overrides(cfg, extra);
  std::vector<Protocol> protos = protocol.empty() ? all_protocols() : std::vector<Protocol>{parse_protocol(protocol)};
  print_header(cfg);
  ComparisonRun run = run_comparison(cfg, protos);
  std::vector<Summary> sums;
  for (std::size_t i = 0; i < run.results.size(); ++i) {
    write_run_outputs(cfg.output_dir, run.configs[i], run.results[i]);
    sums.push_back(run.results[i].summary);
    print_summary(run.results[i].summary);
  }
  const std::string table = comparison_table(sums, run.target);
  write_text(fs::path(cfg.output_dir) / "comparison.md", table);
  std::cout << '\n' << table << "wrote " << cfg.output_dir << '\n';
  return 0;
}

int cmd_compare(const std::string& dir) {
  std::vector<Summary> sums = load_summaries(dir);
  const auto ref = std::find_if(sums.begin(), sums.end(), [](const Summary& s) { return s.protocol == Protocol::fedavg; });
  if (ref == sums.end()) throw ConfigError("compare: no fedavg summary in '" + dir + "' to use as reference");
  apply_speedups(sums, *ref);
  double target = 0.0;
  const fs::path cfg_path = fs::path(dir) / "fedavg.resolved.cfg";
  if (fs::exists(cfg_path)) target = load_config(cfg_path.string()).target_accuracy;
  const std::string table = comparison_table(sums, target);
  write_text(fs::path(dir) / "comparison.md", table);
  std::cout << table;
  return 0;
}

int cmd_plot(const std::string& dir) {
  for (const auto& p : write_plots(dir)) std::cout << "wrote " << p.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Virtual-time federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path, scenario_name, protocol, dir;
  std::uint64_t seed_value = 0;
  std::vector<std::string> extra;

  auto* run = app.add_subcommand("run", "Run one resolved configuration");
  run->add_option("config", config_path, "Key-value config file")->required();
  run->allow_extras();

  auto* scen = app.add_subcommand("scenario", "Run a named scenario against the FedAvg reference");
  scen->add_option("name", scenario_name, "Scenario name")->required();
  scen->add_option("--protocol", protocol, "Single protocol to compare with FedAvg");
  auto* seed_opt = scen->add_option("--seed", seed_value, "Master seed");
  scen->allow_extras();

  auto* cmp = app.add_subcommand("compare", "Rebuild the comparison table from summary files");
  cmp->add_option("dir", dir, "Run directory")->required();

  auto* plot = app.add_subcommand("plot", "Write SVG plots from per-round CSV files");
  plot->add_option("dir", dir, "Run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config_path, run->remaining());
    if (*scen) {
      std::optional<std::uint64_t> seed;
      if (seed_opt->count()) seed = seed_value;
      return cmd_scenario(scenario_name, protocol, scen->remaining(), seed);
    }
    if (*cmp) return cmd_compare(dir);
    if (*plot) return cmd_plot(dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "run failed: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
