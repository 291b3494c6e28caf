#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "heatlab/phy.hpp"

namespace heatlab::gw {

enum class Verdict {
  Delivered,
  FailSensitivity,
  FailSinr,
  FailCapture,
  FailLocked,
  FailNoDemodulator,
  FailGatewayTransmitting,
};

const char* verdict_name(Verdict v);

struct ReceptionOutcome {
  std::uint64_t attempt_id = 0;
  Verdict verdict = Verdict::Delivered;
  double measured_sinr_db = 0.0;
  double measured_rssi_dbm = 0.0;
};

// One demodulator following one signal. The lock engages exactly
// lock_preambles symbol periods after the attempt's start.
struct DemodulatorSlot {
  std::uint64_t attempt_id = 0;
  double locked_at = 0.0;
  int channel = 0;
  int sf = phy::kMinSf;
  bool locked(double now) const { return now >= locked_at; }
};

struct DownlinkWindow {
  double open = 0.0;
  double close = 0.0;  // latest instant the preamble may begin (exclusive)
};

struct DownlinkSchedule {
  double start = 0.0;
  double end = 0.0;
  bool in_rx1 = false;
};

// Single SX1301-class gateway: 8 uplink channels, up to 8 concurrent
// demodulators with lock semantics, capture arbitration among same
// channel/SF signals, and a half-duplex downlink transmitter.
class Gateway {
 public:
  static constexpr int kDemodulators = 8;

  Gateway(const phy::LinkBudgetParams& params, const phy::SfTable& table,
          const phy::SfOrthogonality& coupling, bool half_duplex = true);

  // Uplink reception path. begin_uplink registers the signal (it contributes
  // interference regardless of its own fate) and runs the arrival checks:
  // active downlink, sensitivity, lock, capture contest, demodulator pool.
  void begin_uplink(const phy::TransmissionAttempt& attempt, double now);

  // End-of-packet acceptance: SINR over everything that overlapped the
  // attempt on its channel. Exactly one outcome per attempt.
  ReceptionOutcome end_uplink(std::uint64_t attempt_id, double now);

  // Downlink transmitter. Scheduling reserves the transmitter immediately.
  std::optional<DownlinkSchedule> schedule_downlink(const DownlinkWindow& rx1,
                                                    const DownlinkWindow& rx2,
                                                    double airtime_s);
  void begin_downlink(double start, double end);
  bool transmitting(double now) const { return half_duplex_ && now >= tx_start_ && now < tx_end_; }
  double transmitter_free_at() const { return tx_busy_until_; }

  int occupied_demodulators() const { return static_cast<int>(slots_.size()); }
  double noise_floor() const { return noise_floor_dbm_; }
  const phy::LinkBudgetParams& params() const { return params_; }

 private:
  struct Airborne {
    phy::TransmissionAttempt attempt;
    double interference_mw = 0.0;
    std::optional<Verdict> early_verdict;  // set when the fate is sealed before end-of-packet
  };

  Airborne& live(std::uint64_t id);
  void seal(Airborne& a, Verdict v);
  void drop_slot(int channel, int sf);
  void fail_all_slots(Verdict v);

  phy::LinkBudgetParams params_;
  const phy::SfTable& table_;
  const phy::SfOrthogonality& coupling_;
  bool half_duplex_;
  double noise_floor_dbm_;

  std::unordered_map<std::uint64_t, Airborne> airborne_;
  std::map<std::pair<int, int>, DemodulatorSlot> slots_;  // keyed by (channel, sf)
  double tx_start_ = 0.0, tx_end_ = 0.0;                  // current/last downlink interval
  double tx_busy_until_ = 0.0;                            // includes reservations
};

}  // namespace heatlab::gw
