#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedex/config.hpp"
#include "fedex/protocols.hpp"

namespace fedex {

namespace fs = std::filesystem;

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "round",          "virtual_time_s",   "protocol",     "n_selected", "round_latency_s",
      "max_staleness",  "mean_staleness",   "max_memory_bytes", "n_collisions", "mean_cka",
      "trigger_latched", "accuracy",        "mean_loss"};
  return cols;
}

inline std::string csv_header() {
  std::string s;
  for (const auto& c : csv_columns()) s += (s.empty() ? "" : ",") + c;
  return s;
}

// Shortest round-trip formatting keeps files byte-stable across runs.
inline void write_rounds_csv(std::ostream& out, std::span<const RoundRecord> rounds) {
  using detail::format_double;
  out << csv_header() << '\n';
  for (const auto& r : rounds) {
    for (double v : {r.virtual_time, r.round_latency, r.mean_staleness(), r.max_memory(), r.mean_cka, r.accuracy,
                     r.mean_loss})
      if (!std::isfinite(v)) throw NumericFault("round " + std::to_string(r.round) + ": non-finite metric");
    out << r.round << ',' << format_double(r.virtual_time) << ',' << to_string(r.protocol) << ','
        << r.selected.size() << ',' << format_double(r.round_latency) << ',' << r.max_staleness() << ','
        << format_double(r.mean_staleness()) << ',' << format_double(r.max_memory()) << ',' << r.collisions << ','
        << format_double(r.mean_cka) << ',' << (r.trigger_latched ? 1 : 0) << ',' << format_double(r.accuracy)
        << ',' << format_double(r.mean_loss) << '\n';
  }
}

inline std::string rounds_csv_text(std::span<const RoundRecord> rounds) {
  std::ostringstream o;
  write_rounds_csv(o, rounds);
  return o.str();
}

inline nlohmann::json summary_json(const Summary& s) {
  nlohmann::json j;
  j["protocol"] = to_string(s.protocol);
  j["reached"] = s.reached;
  j["OL_s"] = s.ol_s;
  j["NR"] = s.nr;
  j["PRT_s"] = s.prt_s;
  j["max_accuracy"] = s.max_accuracy;
  j["speedup_vs_reference"] = s.speedup_vs_reference ? nlohmann::json(*s.speedup_vs_reference) : nlohmann::json();
  return j;
}

inline Summary summary_from_json(const nlohmann::json& j) {
  Summary s;
  s.protocol = parse_protocol(j.at("protocol").get<std::string>());
  s.reached = j.at("reached").get<bool>();
  s.ol_s = j.at("OL_s").get<double>();
  s.nr = j.at("NR").get<int>();
  s.prt_s = j.at("PRT_s").get<double>();
  s.max_accuracy = j.at("max_accuracy").get<double>();
  if (j.contains("speedup_vs_reference") && !j["speedup_vs_reference"].is_null())
    s.speedup_vs_reference = j["speedup_vs_reference"].get<double>();
  return s;
}

// SU = OL(reference) / OL(method), defined only when both reached the target.
inline void apply_speedups(std::vector<Summary>& all, const Summary& reference) {
  for (auto& s : all) {
    if (s.reached && reference.reached && s.ol_s > 0.0)
      s.speedup_vs_reference = reference.ol_s / s.ol_s;
    else
      s.speedup_vs_reference.reset();
  }
}

inline std::string comparison_table(std::span<const Summary> rows, double target) {
  std::ostringstream o;
  o << std::fixed;
  o << "| method | reached | OL (h) | NR | PRT (h) | SU |\n";
  o << "|---|---|---|---|---|---|\n";
  for (const auto& s : rows) {
    o << "| " << to_string(s.protocol) << " | " << (s.reached ? "yes" : "no") << " | " << std::setprecision(3)
      << s.ol_s / 3600.0 << " | " << s.nr << " | " << std::setprecision(4) << s.prt_s / 3600.0 << " | ";
    if (s.speedup_vs_reference)
      o << std::setprecision(2) << *s.speedup_vs_reference << "x";
    else
      o << "n/a (max acc " << std::setprecision(0) << s.max_accuracy * 100.0 << "%)";
    o << " |\n";
  }
  o << "\nTarget accuracy " << std::setprecision(4) << target
    << ". Virtual hours follow simulated device timings; only SU ratios compare across testbeds.\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Output files

inline void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
  out << text;
}

inline std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + p.string() + "'");
  std::ostringstream o;
  o << in.rdbuf();
  return o.str();
}

inline void write_run_outputs(const fs::path& dir, const SimConfig& cfg, const ExperimentResult& res) {
  const std::string stem = to_string(cfg.protocol);
  write_text(dir / (stem + ".csv"), rounds_csv_text(res.rounds));
  write_text(dir / (stem + ".summary.json"), summary_json(res.summary).dump(2) + "\n");
  write_text(dir / (stem + ".resolved.cfg"), resolved_config_text(cfg));
}

inline std::vector<Summary> load_summaries(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.size() > 13 && name.substr(name.size() - 13) == ".summary.json") files.push_back(e.path());
  }
  if (files.empty()) throw ConfigError("no *.summary.json files in '" + dir.string() + "'");
  std::vector<Summary> out;
  for (const auto& f : files) out.push_back(summary_from_json(nlohmann::json::parse(read_text(f))));
  std::sort(out.begin(), out.end(), [](const Summary& a, const Summary& b) {
    return static_cast<int>(a.protocol) < static_cast<int>(b.protocol);
  });
  return out;
}

struct CsvSeries {
  std::string protocol;
  std::vector<double> time_s, accuracy, max_staleness, max_memory;
};

inline CsvSeries read_rounds_csv(const fs::path& p) {
  std::istringstream in(read_text(p));
  std::string line;
  if (!std::getline(in, line) || line != csv_header())
    throw ConfigError("'" + p.string() + "': unexpected CSV header");
  CsvSeries s;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != csv_columns().size()) throw ConfigError("'" + p.string() + "': malformed row");
    s.protocol = f[2];
    s.time_s.push_back(std::stod(f[1]));
    s.max_staleness.push_back(std::stod(f[5]));
    s.max_memory.push_back(std::stod(f[7]));
    s.accuracy.push_back(std::stod(f[11]));
  }
  return s;
}

// ---------------------------------------------------------------------------
// SVG

struct SvgSeries {
  std::string label;
  std::vector<double> x, y;
};

inline std::string svg_plot(const std::string& title, const std::string& xlabel, const std::string& ylabel,
                            std::span<const SvgSeries> series, bool scatter) {
  static const char* colours[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};
  const double W = 640, H = 400, L = 70, R = 150, T = 40, B = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        x0 = x1 = s.x[i];
        y0 = y1 = s.y[i];
        first = false;
      }
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  x0 = std::min(x0, 0.0);
  y0 = std::min(y0, 0.0);
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream o;
  o << std::setprecision(6);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double xv = x0 + (x1 - x0) * k / 4.0, yv = y0 + (y1 - y0) * k / 4.0;
    o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"11\">" << xv
      << "</text>\n";
    o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 4 << "\" text-anchor=\"end\" font-size=\"11\">" << yv
      << "</text>\n";
  }
  o << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << xlabel << "</text>\n";
  o << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
    << (T + H - B) / 2 << ")\">" << ylabel << "</text>\n";
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* c = colours[k % 6];
    if (scatter) {
      for (std::size_t i = 0; i < s.x.size(); ++i)
        o << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2\" fill=\"" << c << "\"/>\n";
    } else {
      o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"";
      for (std::size_t i = 0; i < s.x.size(); ++i) o << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
      o << "\"/>\n";
    }
    o << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (k + 1) << "\" font-size=\"12\" fill=\"" << c << "\">"
      << s.label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

// accuracy.svg (lines) and staleness.svg / memory.svg (scatter) from every CSV in `dir`.
inline std::vector<fs::path> write_plots(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("'" + dir.string() + "' is not a directory");
  std::vector<fs::path> csvs;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv") csvs.push_back(e.path());
  if (csvs.empty()) throw ConfigError("no per-round CSV files in '" + dir.string() + "'");
  std::sort(csvs.begin(), csvs.end());
  std::vector<SvgSeries> acc, stale, mem;
  for (const auto& p : csvs) {
    const CsvSeries s = read_rounds_csv(p);
    std::vector<double> hours;
    for (double t : s.time_s) hours.push_back(t / 3600.0);
    std::vector<double> mb;
    for (double b : s.max_memory) mb.push_back(b / kBytesPerMb);
    acc.push_back({s.protocol, hours, s.accuracy});
    stale.push_back({s.protocol, hours, s.max_staleness});
    mem.push_back({s.protocol, hours, mb});
  }
  std::vector<fs::path> out{dir / "accuracy.svg", dir / "staleness.svg", dir / "memory.svg"};
  write_text(out[0], svg_plot("Test accuracy", "virtual time (h)", "accuracy", acc, false));
  write_text(out[1], svg_plot("Max staleness per round", "virtual time (h)", "iterations", stale, true));
  write_text(out[2], svg_plot("Max stored-model memory", "virtual time (h)", "MB", mem, true));
  return out;
}

// ---------------------------------------------------------------------------
// Batch execution

inline unsigned worker_count(std::size_t jobs) {
  unsigned n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("FEDEX_SIM_THREADS")) {
    const int v = std::atoi(env);
    if (v >= 1) n = static_cast<unsigned>(v);
  }
  return static_cast<unsigned>(std::min<std::size_t>(n, std::max<std::size_t>(jobs, 1)));
}

// Runs each config on its own worker. Results keep input order.
inline std::vector<ExperimentResult> run_batch(std::span<const SimConfig> configs) {
  for (const auto& c : configs) {
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw ConfigError(to_string(c.protocol) + " (seed " + std::to_string(c.seed) + "): " + e.what());
    }
  }
  std::vector<ExperimentResult> results(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < configs.size();) {
      try {
        results[i] = run_experiment(configs[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const unsigned n = worker_count(configs.size());
  if (n <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < n; ++k) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception& e) {
      throw ProtocolError(to_string(configs[i].protocol) + " (seed " + std::to_string(configs[i].seed) +
                          ") failed: " + e.what());
    }
  }
  return results;
}

// Accuracy the FedAvg reference reaches at the midpoint of its round budget.
inline double midpoint_target(std::span<const RoundRecord> fedavg_rounds) {
  if (fedavg_rounds.empty()) throw ProtocolError("midpoint_target: reference run has no rounds");
  const std::size_t mid = std::max<std::size_t>(1, fedavg_rounds.size() / 2);
  return fedavg_rounds[mid - 1].accuracy;
}

struct ComparisonRun {
  double target = 0.0;
  std::vector<SimConfig> configs;
  std::vector<ExperimentResult> results;
};

// FedAvg reference plus `protocols` on the same seed. A zero target is
// replaced by the reference's midpoint accuracy.
inline ComparisonRun run_comparison(SimConfig base, std::span<const Protocol> protocols) {
  ComparisonRun out;
  out.target = base.target_accuracy;
  SimConfig ref = base;
  ref.protocol = Protocol::fedavg;
  std::optional<ExperimentResult> ref_result;
  if (out.target <= 0.0) {
    ref.target_accuracy = 0.0;
    ExperimentResult probe = run_experiment(ref);
    out.target = midpoint_target(probe.rounds);
    ref_result = std::move(probe);
  }
  base.target_accuracy = out.target;
  ref.target_accuracy = out.target;

  std::vector<SimConfig> todo;
  for (Protocol p : protocols) {
    if (p == Protocol::fedavg) continue;
    SimConfig c = base;
    c.protocol = p;
    todo.push_back(c);
  }
  std::vector<ExperimentResult> results = run_batch(todo);

  ExperimentResult ref_final;
  if (ref_result) {
    ref_final.rounds.assign(ref_result->rounds.begin(), ref_result->rounds.end());
    // Truncate at the first round meeting the target so the CSV matches a targeted run.
    ref_final.summary = summarize(Protocol::fedavg, ref_final.rounds, out.target);
    if (ref_final.summary.reached) ref_final.rounds.resize(static_cast<std::size_t>(ref_final.summary.nr));
  } else {
    ref_final = run_experiment(ref);
  }

  out.configs.push_back(ref);
  out.results.push_back(std::move(ref_final));
  for (std::size_t i = 0; i < todo.size(); ++i) {
    out.configs.push_back(todo[i]);
    out.results.push_back(std::move(results[i]));
  }
  std::vector<Summary> sums;
  for (const auto& r : out.results) sums.push_back(r.summary);
  apply_speedups(sums, out.results.front().summary);
  for (std::size_t i = 0; i < sums.size(); ++i) out.results[i].summary = sums[i];
  return out;
}

}  // namespace fedex
