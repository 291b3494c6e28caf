#include "heatlab/runner.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "heatlab/heat.hpp"
#include "heatlab/policies.hpp"

namespace heatlab::runner {

namespace {

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", x);
  return buf;
}

std::string make_run_id(const std::string& algo, const CellSpec& spec) {
  std::ostringstream os;
  os << algo << "-n" << spec.n_nodes << "-d" << fmt(spec.delta) << "-s" << spec.seed;
  return os.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
}

}  // namespace

CellResult run_cell(const config::ExperimentConfig& cfg, const CellSpec& spec,
                    const std::string& algo, const CellOutputs& outputs) {
  CellResult result;
  result.run_id = make_run_id(algo, spec);
  result.algo = algo;
  result.spec = spec;
  result.radius_m = cfg.radius_m;
  result.duration_s = cfg.duration_s;

  sim::Scenario scenario = cfg.scenario(spec.n_nodes, spec.delta, spec.seed);
  mac::SetsSpec sets = scenario.sets;
  mdp::HistoryTracker tracker(sets);
  bool wants_trace = !outputs.trace_path.empty();

  auto finish = [&](sim::Simulator& s, sim::RunMetrics metrics) {
    result.metrics = std::move(metrics);
    if (wants_trace) write_file(outputs.trace_path, trace_csv(s.trace()));
  };

  if (algo == "random" || algo == "adrx") {
    policies::RandomUniform random_policy;
    policies::AdrLike adr_policy(spec.n_nodes);
    mdp::Policy& policy =
        algo == "random" ? static_cast<mdp::Policy&>(random_policy) : adr_policy;
    mdp::Environment env(sets, cfg.radius_m, cfg.trade_off_lambda, policy,
                         derive_rng(spec.seed, "policy"), tracker, nullptr, nullptr);
    sim::Simulator s(scenario, &env);
    env.attach(s.nodes());
    s.set_trace_enabled(wants_trace);
    finish(s, s.run());
    return result;
  }

  if (algo != "heat" && algo != "heat-online") {
    throw config::ConfigError("unknown algorithm: " + algo);
  }
  bool offline_module = algo == "heat";
  heat::HeatAgent agent(sets, cfg.heat_config(offline_module), spec.seed);
  bool frozen = !outputs.load_checkpoint.empty();
  if (frozen) agent.load_checkpoint(outputs.load_checkpoint);

  std::optional<mdp::ReplayBuffer> collected;
  const mdp::ReplayBuffer* offline_buffer = outputs.preloaded_offline;
  if (offline_module && !frozen) {
    if (!offline_buffer) {
      policies::RandomUniform collect_policy;
      auto col = mdp::collect_offline(scenario, cfg.offline_minutes, collect_policy, tracker,
                                      cfg.trade_off_lambda, cfg.buffer_capacity);
      collected = std::move(col.buffer);
      offline_buffer = &*collected;
    }
    if (offline_buffer->n_nodes() != spec.n_nodes) {
      throw std::runtime_error("offline buffer was collected for " +
                               std::to_string(offline_buffer->n_nodes()) + " nodes, scenario has " +
                               std::to_string(spec.n_nodes));
    }
    agent.set_offline_buffer(offline_buffer);
    agent.pretrain();
    if (!outputs.buffer_path.empty()) offline_buffer->save_jsonl(outputs.buffer_path);
  }

  mdp::ReplayBuffer online_buffer(spec.n_nodes, cfg.buffer_capacity, mdp::Origin::Online);
  agent.set_online_buffer(&online_buffer);
  mdp::Environment env(sets, cfg.radius_m, cfg.trade_off_lambda, agent,
                       derive_rng(spec.seed, "policy"), tracker,
                       frozen ? nullptr : &online_buffer, frozen ? nullptr : &agent);
  sim::Simulator s(scenario, &env);
  env.attach(s.nodes());
  s.set_trace_enabled(wants_trace);
  finish(s, s.run());
  result.train_updates = agent.total_updates();
  if (!outputs.checkpoint_path.empty()) agent.save_checkpoint(outputs.checkpoint_path);
  return result;
}

std::string csv_header() {
  return "run_id,algo,n_nodes,delta,radius_m,seed,duration_s,sent,succ,pdr,energy_j,"
         "eer_succ_per_joule,train_updates,status\n";
}

std::string csv_row(const CellResult& r) {
  std::ostringstream os;
  os << r.run_id << ',' << r.algo << ',' << r.spec.n_nodes << ',' << fmt(r.spec.delta) << ','
     << fmt(r.radius_m) << ',' << r.spec.seed << ',' << fmt(r.duration_s) << ',' << r.metrics.sent
     << ',' << r.metrics.succ << ',';
  if (auto pdr = r.metrics.pdr()) os << fmt(*pdr);
  os << ',' << fmt(r.metrics.energy_joules) << ',';
  if (auto eer = r.metrics.eer()) os << fmt(*eer);
  os << ',' << r.train_updates << ',' << r.status << '\n';
  return os.str();
}

std::string sweep_csv(const config::ExperimentConfig& cfg) {
  std::vector<CellSpec> specs;
  for (int n : cfg.nodes) {
    for (double d : cfg.delta) {
      for (std::uint64_t seed : cfg.seeds) specs.push_back(CellSpec{n, d, seed});
    }
  }
  std::vector<CellResult> results(specs.size());

  unsigned threads = std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  if (const char* cap = std::getenv("HEATLAB_THREADS")) {
    unsigned v = static_cast<unsigned>(std::strtoul(cap, nullptr, 10));
    if (v >= 1) threads = std::min(threads, v);
  }
  threads = std::min<unsigned>(threads, specs.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      std::size_t i = next.fetch_add(1);
      if (i >= specs.size()) return;
      try {
        results[i] = run_cell(cfg, specs[i], cfg.algo);
      } catch (const std::exception& e) {
        CellResult failed;
        failed.run_id = make_run_id(cfg.algo, specs[i]);
        failed.algo = cfg.algo;
        failed.spec = specs[i];
        failed.radius_m = cfg.radius_m;
        failed.duration_s = cfg.duration_s;
        std::string msg = e.what();
        for (char& c : msg) {
          if (c == ',' || c == '\n') c = ';';
        }
        failed.status = "error: " + msg;
        results[i] = std::move(failed);
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();

  std::string csv = csv_header();
  for (const auto& r : results) csv += csv_row(r);
  return csv;
}

std::string trace_csv(const std::vector<sim::TraceRow>& trace) {
  std::string out = "time,node,channel,sf,verdict,rssi_dbm,sinr_db\n";
  for (const auto& row : trace) {
    std::ostringstream os;
    os << fmt(row.time) << ',' << row.node << ',' << row.channel << ',' << row.sf << ','
       << row.verdict << ',' << fmt(row.rssi_dbm) << ',' << fmt(row.sinr_db) << '\n';
    out += os.str();
  }
  return out;
}

std::string sf_table_csv() {
  phy::SfTable table;
  std::string out = "sf,sensitivity_dbm,demod_threshold_db,data_rate_bps\n";
  for (const auto& row : table.rows()) {
    std::ostringstream os;
    os << row.sf << ',' << fmt(row.sensitivity_dbm) << ',' << fmt(row.demod_threshold_db) << ','
       << fmt(row.data_rate_bps) << '\n';
    out += os.str();
  }
  return out;
}

std::string coupling_table_csv() {
  phy::SfOrthogonality coupling;
  std::string out = "sf";
  for (int sf = phy::kMinSf; sf <= phy::kMaxSf; ++sf) out += "," + std::to_string(sf);
  out += "\n";
  for (int i = phy::kMinSf; i <= phy::kMaxSf; ++i) {
    out += std::to_string(i);
    for (int j = phy::kMinSf; j <= phy::kMaxSf; ++j) out += "," + fmt(coupling.coeff(i, j));
    out += "\n";
  }
  return out;
}

}  // namespace heatlab::runner
