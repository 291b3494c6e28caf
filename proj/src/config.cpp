#include "heatlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace heatlab::config {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(trim(cur));
  return parts;
}

[[noreturn]] void fail(int line, const std::string& key, const std::string& what) {
  std::ostringstream os;
  os << "config error at line " << line << ", key '" << key << "': " << what;
  throw ConfigError(os.str());
}

double parse_double(int line, const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    fail(line, key, "expected a number, got '" + v + "'");
  }
}

long parse_long(int line, const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return x;
  } catch (const std::exception&) {
    fail(line, key, "expected an integer, got '" + v + "'");
  }
}

bool parse_bool(int line, const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(line, key, "expected a boolean, got '" + v + "'");
}

phy::CodingRate parse_cr(int line, const std::string& key, const std::string& v) {
  auto slash = v.find('/');
  if (slash == std::string::npos) fail(line, key, "expected a ratio like 4/5");
  phy::CodingRate cr;
  cr.numerator = static_cast<int>(parse_long(line, key, trim(v.substr(0, slash))));
  cr.denominator = static_cast<int>(parse_long(line, key, trim(v.substr(slash + 1))));
  if (cr.numerator < 1 || cr.denominator <= cr.numerator) {
    fail(line, key, "coding rate must satisfy 1 <= numerator < denominator");
  }
  return cr;
}

}  // namespace

void ExperimentConfig::validate() const {
  auto check_sf_set = [](const std::vector<int>& v, const char* what) {
    if (v.empty()) throw ConfigError(std::string(what) + " must be non-empty");
    for (int sf : v) {
      if (sf < phy::kMinSf || sf > phy::kMaxSf) {
        throw ConfigError(std::string(what) + " value " + std::to_string(sf) +
                          " outside the spreading-factor domain 7..12");
      }
    }
    if (!std::is_sorted(v.begin(), v.end())) throw ConfigError(std::string(what) + " must be sorted");
  };
  check_sf_set(usf_set, "usf_set");
  check_sf_set(dsf_set, "dsf_set");
  if (nodes.empty() || seeds.empty() || delta.empty()) {
    throw ConfigError("nodes, delta and seeds must be non-empty");
  }
  for (int n : nodes) {
    if (n < 1) throw ConfigError("nodes entries must be >= 1");
  }
  for (double d : delta) {
    if (d <= 0) throw ConfigError("delta entries must be > 0");
  }
  if (radius_m <= 0) throw ConfigError("radius_m must be > 0");
  if (duration_s < 0) throw ConfigError("duration_s must be >= 0");
  if (!(rho > 0.5 && rho < 1.0)) throw ConfigError("rho must lie in (0.5, 1)");
  if (!(gamma0 > 0 && gamma0 <= 1 && gamma_max > 0 && gamma_max <= 1)) {
    throw ConfigError("gamma values must lie in (0, 1]");
  }
  if (preamble_symbols < lock_preambles) {
    throw ConfigError("preamble_symbols must be >= lock_preambles");
  }
  if (algo != "random" && algo != "adrx" && algo != "heat" && algo != "heat-online") {
    throw ConfigError("algo must be one of random, adrx, heat, heat-online");
  }
  if (model_dim % heads != 0) throw ConfigError("model_dim must be divisible by heads");
  mac::SetsSpec sets{usf_set, power_set, dsf_set, window_set};
  sets.validate();
  if (std::find(power_set.begin(), power_set.end(), init_ptx_dbm) == power_set.end()) {
    throw ConfigError("init_ptx_dbm must be a member of power_set");
  }
  if (std::find(window_set.begin(), window_set.end(), init_window) == window_set.end()) {
    throw ConfigError("init_window must be a member of window_set");
  }
}

sim::Scenario ExperimentConfig::scenario(int n_nodes, double traffic_delta,
                                         std::uint64_t seed) const {
  sim::Scenario sc;
  sc.deploy = sim::DeploymentConfig{n_nodes, radius_m, traffic_delta, duration_s, seed};
  sc.link.carrier_hz = carrier_hz;
  sc.link.antenna_gain = antenna_gain;
  sc.link.bandwidth_hz = bandwidth_hz;
  sc.link.coding_rate = coding_rate;
  sc.link.noise_figure_db = noise_figure_db;
  sc.link.noise_density_dbm_hz = noise_density_dbm_hz;
  sc.link.capture_threshold_db = capture_threshold_db;
  sc.link.lock_preambles = lock_preambles;
  sc.sets = mac::SetsSpec{usf_set, power_set, dsf_set, window_set};
  sc.mac.payload_bytes = payload_bytes;
  sc.mac.downlink_payload_bytes = downlink_payload_bytes;
  sc.mac.preamble_symbols = preamble_symbols;
  sc.mac.n_channels = n_channels;
  sc.mac.pa_efficiency = pa_efficiency;
  sc.mac.rx_power_mw = rx_power_mw;
  sc.mac.init_ptx_dbm = init_ptx_dbm;
  sc.mac.init_window_symbols = init_window;
  sc.half_duplex = half_duplex;
  return sc;
}

heat::HeatConfig ExperimentConfig::heat_config(bool offline_module) const {
  heat::HeatConfig hc;
  hc.rho = rho;
  hc.alpha = alpha;
  hc.beta_off = offline_module ? beta_off : 0.0;
  hc.gamma0 = gamma0;
  hc.gamma_max = gamma_max;
  hc.gamma_ramp_updates = gamma_ramp_updates;
  hc.adam = nn::AdamConfig{lr, adam_beta1, adam_beta2, adam_eps};
  hc.pretrain_updates = offline_module ? pretrain_updates : 0;
  hc.train_every = train_every;
  hc.offline_steps_per_online = offline_steps_per_online;
  hc.enum_cap = enum_cap;
  hc.alg2_literal_sign = alg2_literal_sign;
  hc.encoder = nn::EncoderConfig{encoder_layers, model_dim, heads, ff_dim, 0};
  hc.offline_module = offline_module;
  return hc;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  static const std::set<std::string> kSections{"scenario", "phy", "mac", "mdp", "train", "run"};

  std::map<std::string, std::function<void(int, const std::string&)>> setters;
  auto set_int_list = [](std::vector<int>& dst) {
    return [out = &dst](int line, const std::string& v) {
      out->clear();
      for (const auto& p : split_list(v)) out->push_back(static_cast<int>(parse_long(line, "", p)));
    };
  };
  auto set_double_list = [](std::vector<double>& dst) {
    return [out = &dst](int line, const std::string& v) {
      out->clear();
      for (const auto& p : split_list(v)) out->push_back(parse_double(line, "", p));
    };
  };
  auto set_double = [](double& dst) {
    return [out = &dst](int line, const std::string& v) { *out = parse_double(line, "", v); };
  };
  auto set_int = [](int& dst) {
    return
        [out = &dst](int line, const std::string& v) { *out = static_cast<int>(parse_long(line, "", v)); };
  };
  auto set_long = [](long& dst) {
    return [out = &dst](int line, const std::string& v) { *out = parse_long(line, "", v); };
  };
  auto set_bool = [](bool& dst) {
    return [out = &dst](int line, const std::string& v) { *out = parse_bool(line, "", v); };
  };
  auto set_string = [](std::string& dst) {
    return [out = &dst](int, const std::string& v) { *out = v; };
  };

  setters["nodes"] = set_int_list(cfg.nodes);
  setters["delta"] = set_double_list(cfg.delta);
  setters["radius_m"] = set_double(cfg.radius_m);
  setters["duration_s"] = set_double(cfg.duration_s);
  setters["seeds"] = [&cfg](int line, const std::string& v) {
    cfg.seeds.clear();
    for (const auto& p : split_list(v)) {
      cfg.seeds.push_back(static_cast<std::uint64_t>(parse_long(line, "seeds", p)));
    }
  };
  setters["carrier_hz"] = set_double(cfg.carrier_hz);
  setters["bandwidth_hz"] = set_double(cfg.bandwidth_hz);
  setters["coding_rate"] = [&cfg](int line, const std::string& v) {
    cfg.coding_rate = parse_cr(line, "coding_rate", v);
  };
  setters["noise_figure_db"] = set_double(cfg.noise_figure_db);
  setters["noise_density_dbm_hz"] = set_double(cfg.noise_density_dbm_hz);
  setters["capture_threshold_db"] = set_double(cfg.capture_threshold_db);
  setters["lock_preambles"] = set_int(cfg.lock_preambles);
  setters["antenna_gain"] = set_double(cfg.antenna_gain);
  setters["preamble_symbols"] = set_int(cfg.preamble_symbols);
  setters["payload_bytes"] = set_int(cfg.payload_bytes);
  setters["downlink_payload_bytes"] = set_int(cfg.downlink_payload_bytes);
  setters["n_channels"] = set_int(cfg.n_channels);
  setters["usf_set"] = set_int_list(cfg.usf_set);
  setters["power_set"] = set_double_list(cfg.power_set);
  setters["dsf_set"] = set_int_list(cfg.dsf_set);
  setters["window_set"] = set_int_list(cfg.window_set);
  setters["pa_efficiency"] = set_double(cfg.pa_efficiency);
  setters["rx_power_mw"] = set_double(cfg.rx_power_mw);
  setters["half_duplex"] = set_bool(cfg.half_duplex);
  setters["init_ptx_dbm"] = set_double(cfg.init_ptx_dbm);
  setters["init_window"] = set_int(cfg.init_window);
  setters["trade_off_lambda"] = set_double(cfg.trade_off_lambda);
  setters["buffer_capacity"] = [&cfg](int line, const std::string& v) {
    cfg.buffer_capacity = static_cast<std::size_t>(parse_long(line, "buffer_capacity", v));
  };
  setters["offline_minutes"] = set_double(cfg.offline_minutes);
  setters["rho"] = set_double(cfg.rho);
  setters["alpha"] = set_double(cfg.alpha);
  setters["beta_off"] = set_double(cfg.beta_off);
  setters["gamma0"] = set_double(cfg.gamma0);
  setters["gamma_max"] = set_double(cfg.gamma_max);
  setters["gamma_ramp_updates"] = set_long(cfg.gamma_ramp_updates);
  setters["lr"] = set_double(cfg.lr);
  setters["adam_beta1"] = set_double(cfg.adam_beta1);
  setters["adam_beta2"] = set_double(cfg.adam_beta2);
  setters["adam_eps"] = set_double(cfg.adam_eps);
  setters["pretrain_updates"] = set_long(cfg.pretrain_updates);
  setters["train_every"] = set_int(cfg.train_every);
  setters["offline_steps_per_online"] = set_int(cfg.offline_steps_per_online);
  setters["enum_cap"] = set_int(cfg.enum_cap);
  setters["alg2_literal_sign"] = set_bool(cfg.alg2_literal_sign);
  setters["encoder_layers"] = set_int(cfg.encoder_layers);
  setters["model_dim"] = set_int(cfg.model_dim);
  setters["heads"] = set_int(cfg.heads);
  setters["ff_dim"] = set_int(cfg.ff_dim);
  setters["algo"] = set_string(cfg.algo);
  setters["out"] = set_string(cfg.out);
  setters["trace"] = set_string(cfg.trace);

  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    line_no += 1;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(line_no, line, "unterminated section header");
      std::string section = trim(line.substr(1, line.size() - 2));
      if (!kSections.count(section)) fail(line_no, section, "unknown section");
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(line_no, line, "expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end()) fail(line_no, key, "unknown key");
    try {
      it->second(line_no, value);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fail(line_no, key, e.what());
    }
  }
  try {
    cfg.validate();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

}  // namespace heatlab::config
