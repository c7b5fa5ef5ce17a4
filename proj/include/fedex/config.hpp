#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fedex/core.hpp"
#include "fedex/learning.hpp"

namespace fedex {

enum class Protocol { fedavg, oort, dga, dgaplus, dgaplus_oort, fedex };

inline std::string to_string(Protocol p) {
  switch (p) {
    case Protocol::fedavg: return "fedavg";
    case Protocol::oort: return "oort";
    case Protocol::dga: return "dga";
    case Protocol::dgaplus: return "dgaplus";
    case Protocol::dgaplus_oort: return "dgaplus-oort";
    case Protocol::fedex: return "fedex";
  }
  return "?";
}

inline const std::vector<Protocol>& all_protocols() {
  static const std::vector<Protocol> all{Protocol::fedavg, Protocol::oort, Protocol::dga,
                                         Protocol::dgaplus, Protocol::dgaplus_oort, Protocol::fedex};
  return all;
}

inline Protocol parse_protocol(std::string_view s) {
  for (Protocol p : all_protocols())
    if (to_string(p) == s) return p;
  if (s == "oort-fl") return Protocol::oort;
  throw ConfigError("protocol: unknown '" + std::string(s) +
                    "' (valid: fedavg, oort, dga, dgaplus, dgaplus-oort, fedex)");
}

// Device timings. The three measured devices use the measured comp/comm
// timings; Honor 70 and Honor Play 6T are synthetic, interpolated between
// Xiaomi 12S and TX2 at 1/3 and 2/3.
struct ProfilePreset {
  std::string name;
  double t_cp = 1.0;        // seconds per iteration
  double t_comm_ref = 1.0;  // seconds per model upload
  double mem_mb = 8192.0;
  bool synthetic = false;

  friend bool operator==(const ProfilePreset&, const ProfilePreset&) = default;
};

inline constexpr double kBytesPerMb = 1e6;

inline std::vector<ProfilePreset> builtin_presets() {
  const ProfilePreset xiaomi{"xiaomi12s", 0.84, 7.66, 8192.0, false};
  const ProfilePreset tx2{"tx2", 1.35, 6.40, 4096.0, false};
  auto lerp = [&](std::string name, double f) {
    return ProfilePreset{std::move(name), xiaomi.t_cp + f * (tx2.t_cp - xiaomi.t_cp),
                         xiaomi.t_comm_ref + f * (tx2.t_comm_ref - xiaomi.t_comm_ref), 8192.0, true};
  };
  return {ProfilePreset{"xavier", 1.13, 5.54, 8192.0, false}, tx2, xiaomi, lerp("honor70", 1.0 / 3.0),
          lerp("honorplay6t", 2.0 / 3.0)};
}

struct DeviceMixEntry {
  std::string preset;
  int count = 0;

  friend bool operator==(const DeviceMixEntry&, const DeviceMixEntry&) = default;
};

struct SimConfig {
  Protocol protocol = Protocol::fedex;

  int participants = 20;   // P
  int local_iters = 10;    // K
  int ceiling = 10;        // U
  double alpha = 2.0;
  double delta_cka = 0.7;  // <= 0 means overlap from the first round
  double c_boost = 1.0;
  double eta = 0.01;
  int batch_size = 10;     // <= 0: full shard
  double t_pref = 0.0;     // Oort preferred round duration; 0 = median round-1 latency
  double estimate_noise = 0.0;

  double lambda = 0.5;
  int samples_per_device = 100;
  double test_fraction = 0.2;
  int probe_size = 256;
  double separation = 0.5;
  std::string data_csv;

  LearningTask task{};

  double model_bytes = 24.7e6;

  std::vector<DeviceMixEntry> device_mix{
      {"xiaomi12s", 20}, {"xavier", 20}, {"honor70", 20}, {"honorplay6t", 20}, {"tx2", 20}};
  std::map<std::string, ProfilePreset> custom_profiles;

  double target_accuracy = 0.0;  // 0 = run the whole budget
  int max_rounds = 100;
  double max_hours = 0.0;        // 0 = unlimited virtual time
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  int n_devices() const {
    int n = 0;
    for (const auto& e : device_mix) n += e.count;
    return n;
  }

  const ProfilePreset& preset(const std::string& name) const {
    if (auto it = custom_profiles.find(name); it != custom_profiles.end()) return it->second;
    static const std::vector<ProfilePreset> builtins = builtin_presets();
    for (const auto& p : builtins)
      if (p.name == name) return p;
    std::string valid;
    for (const auto& p : builtins) valid += (valid.empty() ? "" : ", ") + p.name;
    for (const auto& [k, v] : custom_profiles) valid += ", " + k;
    throw ConfigError("devices.mix: unknown profile '" + name + "' (valid: " + valid + ")");
  }

  void validate() const {
    auto bound = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    const int n = n_devices();
    bound(!device_mix.empty() && n >= 1, "devices.mix: at least one device required");
    for (const auto& e : device_mix) {
      bound(e.count >= 1, "devices.mix: count for '" + e.preset + "' must be >= 1");
      (void)preset(e.preset);
    }
    for (const auto& [name, p] : custom_profiles)
      bound(p.t_cp > 0 && p.t_comm_ref > 0 && p.mem_mb > 0,
            "profile." + name + ": t_cp, t_comm and mem_mb must be > 0");
    bound(participants >= 1, "fl.participants must be >= 1");
    bound(participants <= n, "fl.participants (" + std::to_string(participants) +
                                 ") must be <= number of devices (" + std::to_string(n) + ")");
    bound(local_iters >= 1, "fl.local_iters must be >= 1");
    bound(ceiling >= 0, "fl.ceiling must be >= 0");
    bound(alpha >= 0.0, "fl.alpha must be >= 0");
    bound(delta_cka >= 0.0 && delta_cka <= 1.0, "fl.delta_cka must lie in [0, 1]");
    bound(c_boost >= 0.0, "fl.c_boost must be >= 0");
    bound(eta > 0.0, "fl.eta must be > 0");
    bound(t_pref >= 0.0, "oort.t_pref must be >= 0");
    bound(estimate_noise >= 0.0, "timing.estimate_noise must be >= 0");
    bound(lambda >= 0.0 && lambda <= 1.0, "data.lambda must lie in [0, 1]");
    bound(samples_per_device >= 1, "data.samples_per_device must be >= 1");
    bound(test_fraction > 0.0 && test_fraction < 1.0, "data.test_fraction must lie in (0, 1)");
    bound(probe_size >= 2, "data.probe_size must be >= 2");
    bound(separation > 0.0, "data.separation must be > 0");
    task.validate();
    bound(model_bytes > 0.0, "model.bytes must be > 0");
    bound(target_accuracy >= 0.0 && target_accuracy <= 1.0, "run.target_accuracy must lie in [0, 1]");
    bound(max_rounds >= 1, "run.max_rounds must be >= 1");
    bound(max_hours >= 0.0, "run.max_hours must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Flat `dotted.key = value` format, '#' comments.

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || p != value.data() + value.size())
    throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  return out;
}

inline std::vector<DeviceMixEntry> parse_mix(const std::string& value) {
  std::vector<DeviceMixEntry> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos)
      throw ConfigError("devices.mix: entry '" + item + "' must look like name:count");
    out.push_back({trim(item.substr(0, colon)), parse_number<int>("devices.mix", trim(item.substr(colon + 1)))});
  }
  return out;
}

inline const std::vector<std::string>& fixed_keys() {
  static const std::vector<std::string> keys{
      "protocol",        "fl.participants",     "fl.local_iters",    "fl.ceiling",    "fl.alpha",
      "fl.delta_cka",    "fl.c_boost",          "fl.eta",            "fl.batch_size", "oort.t_pref",
      "timing.estimate_noise", "data.lambda",   "data.samples_per_device", "data.test_fraction",
      "data.probe_size", "data.separation",     "data.csv",          "task.kind",     "task.input_dim",
      "task.num_classes", "task.hidden_dim",    "task.l2",           "model.bytes",   "devices.mix",
      "run.target_accuracy", "run.max_rounds",  "run.max_hours",     "run.seed",      "output.dir"};
  return keys;
}

}  // namespace detail

inline std::string valid_keys_message() {
  std::string s;
  for (const auto& k : detail::fixed_keys()) s += (s.empty() ? "" : ", ") + k;
  return s + ", profile.<name>.{t_cp,t_comm,mem_mb}";
}

inline void apply_setting(SimConfig& cfg, const std::string& key, const std::string& raw) {
  using detail::parse_number;
  const std::string value = detail::trim(raw);
  auto d = [&] { return parse_number<double>(key, value); };
  auto i = [&] { return parse_number<int>(key, value); };

  if (key == "protocol") cfg.protocol = parse_protocol(value);
  else if (key == "fl.participants") cfg.participants = i();
  else if (key == "fl.local_iters") cfg.local_iters = i();
  else if (key == "fl.ceiling") cfg.ceiling = i();
  else if (key == "fl.alpha") cfg.alpha = d();
  else if (key == "fl.delta_cka") cfg.delta_cka = d();
  else if (key == "fl.c_boost") cfg.c_boost = d();
  else if (key == "fl.eta") cfg.eta = d();
  else if (key == "fl.batch_size") cfg.batch_size = i();
  else if (key == "oort.t_pref") cfg.t_pref = d();
  else if (key == "timing.estimate_noise") cfg.estimate_noise = d();
  else if (key == "data.lambda") cfg.lambda = d();
  else if (key == "data.samples_per_device") cfg.samples_per_device = i();
  else if (key == "data.test_fraction") cfg.test_fraction = d();
  else if (key == "data.probe_size") cfg.probe_size = i();
  else if (key == "data.separation") cfg.separation = d();
  else if (key == "data.csv") cfg.data_csv = value;
  else if (key == "task.kind") cfg.task.kind = parse_task_kind(value);
  else if (key == "task.input_dim") cfg.task.input_dim = i();
  else if (key == "task.num_classes") cfg.task.num_classes = i();
  else if (key == "task.hidden_dim") cfg.task.hidden_dim = i();
  else if (key == "task.l2") cfg.task.l2_reg = d();
  else if (key == "model.bytes") cfg.model_bytes = d();
  else if (key == "devices.mix") cfg.device_mix = detail::parse_mix(value);
  else if (key == "run.target_accuracy") cfg.target_accuracy = d();
  else if (key == "run.max_rounds") cfg.max_rounds = i();
  else if (key == "run.max_hours") cfg.max_hours = d();
  else if (key == "run.seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "output.dir") cfg.output_dir = value;
  else if (key.rfind("profile.", 0) == 0) {
    const auto dot = key.rfind('.');
    const std::string name = key.substr(8, dot > 8 ? dot - 8 : 0);
    const std::string field = key.substr(dot + 1);
    if (name.empty() || dot <= 8) throw ConfigError("unknown key '" + key + "'; valid keys: " + valid_keys_message());
    auto [it, inserted] = cfg.custom_profiles.try_emplace(name, ProfilePreset{name, 1.0, 1.0, 8192.0, true});
    if (field == "t_cp") it->second.t_cp = d();
    else if (field == "t_comm") it->second.t_comm_ref = d();
    else if (field == "mem_mb") it->second.mem_mb = d();
    else throw ConfigError("unknown key '" + key + "'; valid keys: " + valid_keys_message());
  } else {
    throw ConfigError("unknown key '" + key + "'; valid keys: " + valid_keys_message());
  }
}

inline SimConfig parse_config_text(std::string_view text, SimConfig cfg = {}) {
  std::stringstream ss{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    apply_setting(cfg, detail::trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

// Every key with its resolved value; parsing this text reproduces `cfg`.
inline std::string resolved_config_text(const SimConfig& cfg) {
  using detail::format_double;
  std::ostringstream o;
  o << "# resolved configuration\n";
  o << "protocol = " << to_string(cfg.protocol) << '\n';
  o << "fl.participants = " << cfg.participants << '\n';
  o << "fl.local_iters = " << cfg.local_iters << '\n';
  o << "fl.ceiling = " << cfg.ceiling << '\n';
  o << "fl.alpha = " << format_double(cfg.alpha) << '\n';
  o << "fl.delta_cka = " << format_double(cfg.delta_cka) << '\n';
  o << "fl.c_boost = " << format_double(cfg.c_boost) << '\n';
  o << "fl.eta = " << format_double(cfg.eta) << '\n';
  o << "fl.batch_size = " << cfg.batch_size << '\n';
  o << "oort.t_pref = " << format_double(cfg.t_pref) << '\n';
  o << "timing.estimate_noise = " << format_double(cfg.estimate_noise) << '\n';
  o << "data.lambda = " << format_double(cfg.lambda) << '\n';
  o << "data.samples_per_device = " << cfg.samples_per_device << '\n';
  o << "data.test_fraction = " << format_double(cfg.test_fraction) << '\n';
  o << "data.probe_size = " << cfg.probe_size << '\n';
  o << "data.separation = " << format_double(cfg.separation) << '\n';
  if (!cfg.data_csv.empty()) o << "data.csv = " << cfg.data_csv << '\n';
  o << "task.kind = " << to_string(cfg.task.kind) << '\n';
  o << "task.input_dim = " << cfg.task.input_dim << '\n';
  o << "task.num_classes = " << cfg.task.num_classes << '\n';
  o << "task.hidden_dim = " << cfg.task.hidden_dim << '\n';
  o << "task.l2 = " << format_double(cfg.task.l2_reg) << '\n';
  o << "model.bytes = " << format_double(cfg.model_bytes) << '\n';
  for (const auto& [name, p] : cfg.custom_profiles) {
    o << "profile." << name << ".t_cp = " << format_double(p.t_cp) << '\n';
    o << "profile." << name << ".t_comm = " << format_double(p.t_comm_ref) << '\n';
    o << "profile." << name << ".mem_mb = " << format_double(p.mem_mb) << '\n';
  }
  o << "devices.mix = ";
  for (std::size_t i = 0; i < cfg.device_mix.size(); ++i)
    o << (i ? "," : "") << cfg.device_mix[i].preset << ':' << cfg.device_mix[i].count;
  o << '\n';
  o << "run.target_accuracy = " << format_double(cfg.target_accuracy) << '\n';
  o << "run.max_rounds = " << cfg.max_rounds << '\n';
  o << "run.max_hours = " << format_double(cfg.max_hours) << '\n';
  o << "run.seed = " << cfg.seed << '\n';
  o << "output.dir = " << cfg.output_dir << '\n';
  return o.str();
}

// ---------------------------------------------------------------------------
// Named scenarios

inline const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names{"tiermix-70-20-10", "tiermix-30-30-40", "tiermix-20-30-50",
                                              "homogeneous-tx2", "trio"};
  return names;
}

inline SimConfig scenario(const std::string& name) {
  SimConfig cfg;
  auto tiers = [&](int h, int m, int l) {
    cfg.device_mix = {{"xiaomi12s", h}, {"honor70", m}, {"tx2", l}};
  };
  if (name == "tiermix-70-20-10") tiers(70, 20, 10);
  else if (name == "tiermix-30-30-40") tiers(30, 30, 40);
  else if (name == "tiermix-20-30-50") tiers(20, 30, 50);
  else if (name == "homogeneous-tx2") cfg.device_mix = {{"tx2", 100}};
  else if (name == "trio") {
    cfg.device_mix = {{"tx2", 10}, {"xavier", 10}, {"xiaomi12s", 10}};
    cfg.participants = 10;
  } else {
    std::string all;
    for (const auto& n : scenario_names()) all += (all.empty() ? "" : ", ") + n;
    throw ConfigError("unknown scenario '" + name + "' (available: " + all + ")");
  }
  cfg.output_dir = "runs/" + name;
  cfg.validate();
  return cfg;
}

}  // namespace fedex
