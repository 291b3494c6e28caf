#include "heatlab/node.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace heatlab::mac {

SetsSpec SetsSpec::defaults() {
  SetsSpec s;
  s.usf = {7, 8, 9, 10, 11, 12};
  s.power_dbm = {2, 5, 8, 11, 14, 17};
  s.dsf = {7, 8, 9, 10, 11, 12};
  s.window_symbols = {8, 16, 32, 64};
  return s;
}

void SetsSpec::validate() const {
  auto sorted_nonempty = [](const auto& v) {
    return !v.empty() && std::is_sorted(v.begin(), v.end()) &&
           std::adjacent_find(v.begin(), v.end()) == v.end();
  };
  if (!sorted_nonempty(usf) || !sorted_nonempty(dsf))
    throw std::domain_error("SF sets must be non-empty, sorted, distinct");
  if (!sorted_nonempty(power_dbm)) throw std::domain_error("power set must be non-empty, sorted, distinct");
  if (!sorted_nonempty(window_symbols))
    throw std::domain_error("window set must be non-empty, sorted, distinct");
  for (int sf : usf) phy::SfTable::check_sf(sf);
  for (int sf : dsf) phy::SfTable::check_sf(sf);
}

namespace {
int index_of_int(const std::vector<int>& v, int value, const char* what) {
  auto it = std::find(v.begin(), v.end(), value);
  if (it == v.end()) throw std::domain_error(std::string(what) + " not in configured set");
  return static_cast<int>(it - v.begin());
}

int index_of_power(const std::vector<double>& v, double value) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] == value) return static_cast<int>(i);
  }
  throw std::domain_error("initial power not in configured power set");
}
}  // namespace

void init_node_params(EndNode& node, double radius_m, const SetsSpec& sets, const MacParams& mac) {
  int band = static_cast<int>(std::floor(6.0 * node.distance_m / radius_m));
  band = std::clamp(band, 0, 5);
  int sf = phy::kMinSf + band;
  // Snap to the nearest configured SF at or above the band's value.
  auto snap = [&](const std::vector<int>& set) {
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set[i] >= sf) return static_cast<int>(i);
    }
    return static_cast<int>(set.size()) - 1;
  };
  node.usf_i = snap(sets.usf);
  node.p_i = index_of_power(sets.power_dbm, mac.init_ptx_dbm);
  node.dsf_i = snap(sets.dsf);
  node.w_i = index_of_int(sets.window_symbols, mac.init_window_symbols, "initial window");
}

double next_uplink_gap_s(Rng& rng, double delta_per_min) {
  if (delta_per_min <= 0) throw std::domain_error("traffic rate must be > 0");
  return rng.exponential(60.0 / delta_per_min);
}

phy::TransmissionAttempt begin_uplink(EndNode& node, double now, Rng& rng, const SetsSpec& sets,
                                      const MacParams& mac, const phy::LinkBudgetParams& link,
                                      std::uint64_t attempt_id) {
  if (now < node.busy_until) throw std::logic_error("begin_uplink called while node busy");
  phy::TransmissionAttempt a;
  a.id = attempt_id;
  a.node = node.id;
  a.channel = static_cast<int>(rng.uniform_index(mac.n_channels));
  a.sf = node.usf(sets);
  a.ptx_dbm = node.ptx_dbm(sets);
  a.start_time = now;
  auto air = phy::time_on_air(a.sf, mac.payload_bytes, mac.preamble_symbols, link.bandwidth_hz,
                              link.coding_rate);
  a.end_time = now + air.total_s;
  phy::FadingDraw fading{rng.unit_exponential()};
  double loss = phy::friis_path_loss(link.carrier_hz, node.distance_m);
  a.rssi_dbm = phy::rssi_dbm(a.ptx_dbm, link.antenna_gain, loss, fading);
  node.n_sent += 1;
  node.energy_joules += transmit_energy_j(a.ptx_dbm, air.total_s, mac);
  node.busy_until = a.end_time;
  return a;
}

RxSchedule open_receive_windows(const EndNode& node, double uplink_end, const SetsSpec& sets,
                                const phy::LinkBudgetParams& link) {
  double len = node.window_symbols(sets) * phy::symbol_duration_s(node.dsf(sets), link.bandwidth_hz);
  RxSchedule rx;
  rx.rx1_open = uplink_end + 1.0;
  rx.rx1_close = rx.rx1_open + len;
  rx.rx2_open = uplink_end + 2.0;
  rx.rx2_close = rx.rx2_open + len;
  return rx;
}

void apply_downlink_command(EndNode& node, const Action4& action, bool delivered,
                            const SetsSpec& sets) {
  if (action.usf_i < 0 || action.usf_i >= static_cast<int>(sets.usf.size()) ||
      action.p_i < 0 || action.p_i >= static_cast<int>(sets.power_dbm.size()) ||
      action.dsf_i < 0 || action.dsf_i >= static_cast<int>(sets.dsf.size()) ||
      action.w_i < 0 || action.w_i >= static_cast<int>(sets.window_symbols.size())) {
    throw std::domain_error("action indices outside configured sets");
  }
  if (!delivered) return;
  node.usf_i = action.usf_i;
  node.p_i = action.p_i;
  node.dsf_i = action.dsf_i;
  node.w_i = action.w_i;
}

double transmit_energy_j(double ptx_dbm, double airtime_s, const MacParams& mac) {
  double radiated_mw = phy::dbm_to_mw(ptx_dbm);
  return radiated_mw / mac.pa_efficiency * airtime_s * 1e-3;
}

double receive_energy_j(double window_s, const MacParams& mac) {
  return mac.rx_power_mw * window_s * 1e-3;
}

}  // namespace heatlab::mac
