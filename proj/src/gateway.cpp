#include "heatlab/gateway.hpp"

#include <stdexcept>

namespace heatlab::gw {

const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Delivered: return "delivered";
    case Verdict::FailSensitivity: return "fail_sensitivity";
    case Verdict::FailSinr: return "fail_sinr";
    case Verdict::FailCapture: return "fail_capture";
    case Verdict::FailLocked: return "fail_locked";
    case Verdict::FailNoDemodulator: return "fail_no_demodulator";
    case Verdict::FailGatewayTransmitting: return "fail_gateway_transmitting";
  }
  return "unknown";
}

Gateway::Gateway(const phy::LinkBudgetParams& params, const phy::SfTable& table,
                 const phy::SfOrthogonality& coupling, bool half_duplex)
    : params_(params),
      table_(table),
      coupling_(coupling),
      half_duplex_(half_duplex),
      noise_floor_dbm_(phy::noise_floor_dbm(params.bandwidth_hz, params.noise_figure_db,
                                            params.noise_density_dbm_hz)) {
  params_.validate();
}

Gateway::Airborne& Gateway::live(std::uint64_t id) {
  auto it = airborne_.find(id);
  if (it == airborne_.end()) throw std::logic_error("unknown attempt id");
  return it->second;
}

void Gateway::seal(Airborne& a, Verdict v) {
  if (!a.early_verdict) a.early_verdict = v;
}

void Gateway::drop_slot(int channel, int sf) { slots_.erase({channel, sf}); }

void Gateway::fail_all_slots(Verdict v) {
  for (auto& [key, slot] : slots_) {
    seal(live(slot.attempt_id), v);
  }
  slots_.clear();
}

void Gateway::begin_uplink(const phy::TransmissionAttempt& attempt, double now) {
  if (airborne_.count(attempt.id)) throw std::logic_error("duplicate attempt id");

  // Register the signal's energy against every airborne same-channel attempt
  // (binary overlap: any overlap contributes the full packet power).
  Airborne entry{attempt, 0.0, std::nullopt};
  for (auto& [id, other] : airborne_) {
    if (other.attempt.channel != attempt.channel) continue;
    other.interference_mw +=
        phy::dbm_to_mw(attempt.rssi_dbm) * coupling_.coeff(other.attempt.sf, attempt.sf);
    entry.interference_mw +=
        phy::dbm_to_mw(other.attempt.rssi_dbm) * coupling_.coeff(attempt.sf, other.attempt.sf);
  }

  // Same-channel same-SF signals still in the air take part in the capture
  // contest whatever their own fate; their chirps are indistinguishable
  // from the newcomer's at the correlator.
  std::vector<const phy::TransmissionAttempt*> rivals;
  for (auto& [id, other] : airborne_) {
    if (other.attempt.channel == attempt.channel && other.attempt.sf == attempt.sf) {
      rivals.push_back(&other.attempt);
    }
  }

  auto it_inserted = airborne_.emplace(attempt.id, std::move(entry)).first;
  Airborne& self = it_inserted->second;

  if (transmitting(now)) {
    seal(self, Verdict::FailGatewayTransmitting);
    return;
  }

  bool dominates_all = true;
  for (const auto* r : rivals) {
    if (attempt.rssi_dbm < r->rssi_dbm + params_.capture_threshold_db) {
      dominates_all = false;
      break;
    }
  }

  auto slot_it = slots_.find({attempt.channel, attempt.sf});
  bool below_sensitivity = attempt.rssi_dbm < table_.at(attempt.sf).sensitivity_dbm;

  if (slot_it != slots_.end() && slot_it->second.locked(now)) {
    // Lock permanence: the demodulator will not switch, the newcomer only
    // adds interference.
    seal(self, below_sensitivity ? Verdict::FailSensitivity : Verdict::FailLocked);
    return;
  }

  if (slot_it != slots_.end()) {
    Airborne& holder = live(slot_it->second.attempt_id);
    bool holder_dominates =
        holder.attempt.rssi_dbm >= attempt.rssi_dbm + params_.capture_threshold_db;
    if (below_sensitivity) {
      // Undetectable itself, but its energy can still garble a pre-lock holder.
      seal(self, Verdict::FailSensitivity);
      if (!holder_dominates) {
        seal(holder, Verdict::FailCapture);
        drop_slot(attempt.channel, attempt.sf);
      }
      return;
    }
    if (dominates_all) {
      // Capture: the stronger signal takes the demodulator; its own lock
      // timer starts from its own preamble.
      seal(holder, Verdict::FailCapture);
      slot_it->second = DemodulatorSlot{
          attempt.id,
          now + phy::preamble_lock_duration_s(attempt.sf, params_.bandwidth_hz,
                                              params_.lock_preambles),
          attempt.channel, attempt.sf};
      return;
    }
    if (holder_dominates) {
      seal(self, Verdict::FailCapture);
      return;
    }
    // Neither side clears the capture threshold: the demodulator flaps
    // between the two and decodes neither.
    seal(holder, Verdict::FailCapture);
    seal(self, Verdict::FailCapture);
    drop_slot(attempt.channel, attempt.sf);
    return;
  }

  if (below_sensitivity) {
    seal(self, Verdict::FailSensitivity);
    return;
  }
  if (!dominates_all) {
    // No demodulator is following this (channel, SF) pair, but older
    // same-chirp energy is still in the air and the newcomer cannot
    // capture over it.
    seal(self, Verdict::FailCapture);
    return;
  }
  if (static_cast<int>(slots_.size()) >= kDemodulators) {
    seal(self, Verdict::FailNoDemodulator);
    return;
  }
  slots_[{attempt.channel, attempt.sf}] = DemodulatorSlot{
      attempt.id,
      now + phy::preamble_lock_duration_s(attempt.sf, params_.bandwidth_hz,
                                          params_.lock_preambles),
      attempt.channel, attempt.sf};
}

ReceptionOutcome Gateway::end_uplink(std::uint64_t attempt_id, double) {
  auto it = airborne_.find(attempt_id);
  if (it == airborne_.end()) throw std::logic_error("end_uplink: unknown attempt");
  Airborne a = it->second;
  airborne_.erase(it);

  ReceptionOutcome out;
  out.attempt_id = attempt_id;
  out.measured_rssi_dbm = a.attempt.rssi_dbm;
  out.measured_sinr_db = phy::sinr_db(a.attempt.rssi_dbm, a.interference_mw, noise_floor_dbm_);

  auto slot_it = slots_.find({a.attempt.channel, a.attempt.sf});
  bool holds_slot = slot_it != slots_.end() && slot_it->second.attempt_id == attempt_id;
  if (holds_slot) slots_.erase(slot_it);

  if (a.early_verdict) {
    out.verdict = *a.early_verdict;
    return out;
  }
  if (!holds_slot) throw std::logic_error("attempt without verdict must hold a slot");

  const auto& profile = table_.at(a.attempt.sf);
  if (a.attempt.rssi_dbm < profile.sensitivity_dbm) {
    out.verdict = Verdict::FailSensitivity;
  } else if (out.measured_sinr_db < profile.demod_threshold_db) {
    out.verdict = Verdict::FailSinr;
  } else {
    out.verdict = Verdict::Delivered;
  }
  return out;
}

std::optional<DownlinkSchedule> Gateway::schedule_downlink(const DownlinkWindow& rx1,
                                                           const DownlinkWindow& rx2,
                                                           double airtime_s) {
  double s1 = std::max(rx1.open, tx_busy_until_);
  if (s1 < rx1.close) {
    tx_busy_until_ = s1 + airtime_s;
    return DownlinkSchedule{s1, s1 + airtime_s, true};
  }
  double s2 = std::max(rx2.open, tx_busy_until_);
  if (s2 < rx2.close) {
    tx_busy_until_ = s2 + airtime_s;
    return DownlinkSchedule{s2, s2 + airtime_s, false};
  }
  return std::nullopt;
}

void Gateway::begin_downlink(double start, double end) {
  tx_start_ = start;
  tx_end_ = end;
  if (half_duplex_) fail_all_slots(Verdict::FailGatewayTransmitting);
}

}  // namespace heatlab::gw
