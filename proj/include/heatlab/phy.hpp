#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace heatlab::phy {

inline constexpr int kMinSf = 7;
inline constexpr int kMaxSf = 12;
inline constexpr int kNumSf = kMaxSf - kMinSf + 1;
inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

// Per-spreading-factor receiver characteristics: sensitivity floor,
// SINR demodulation floor, and the nominal bit rate at BW 125 kHz / CR 4/5.
struct SfProfile {
  int sf;
  double sensitivity_dbm;
  double demod_threshold_db;
  double data_rate_bps;
};

class SfTable {
 public:
  SfTable();
  const SfProfile& at(int sf) const {
    check_sf(sf);
    return rows_[sf - kMinSf];
  }
  const std::array<SfProfile, kNumSf>& rows() const { return rows_; }
  static void check_sf(int sf) {
    if (sf < kMinSf || sf > kMaxSf) throw std::domain_error("spreading factor out of range 7..12");
  }

 private:
  std::array<SfProfile, kNumSf> rows_;
};

// Pairwise inter-SF interference coefficients. Symmetric, unit diagonal.
class SfOrthogonality {
 public:
  SfOrthogonality();
  double coeff(int sf_target, int sf_interferer) const {
    SfTable::check_sf(sf_target);
    SfTable::check_sf(sf_interferer);
    return grid_[sf_target - kMinSf][sf_interferer - kMinSf];
  }

 private:
  std::array<std::array<double, kNumSf>, kNumSf> grid_;
};

struct CodingRate {
  int numerator = 4;
  int denominator = 5;
  double ratio() const { return static_cast<double>(numerator) / denominator; }
};

struct LinkBudgetParams {
  double carrier_hz = 470e6;
  double antenna_gain = 1.0;  // linear
  double bandwidth_hz = 125e3;
  CodingRate coding_rate{};
  double noise_figure_db = 6.0;
  double noise_density_dbm_hz = -174.0;
  double capture_threshold_db = 6.0;
  int lock_preambles = 4;

  void validate() const {
    if (carrier_hz <= 0) throw std::domain_error("carrier_hz must be > 0");
    if (bandwidth_hz <= 0) throw std::domain_error("bandwidth_hz must be > 0");
    if (lock_preambles < 1) throw std::domain_error("lock_preambles must be >= 1");
  }
};

// One unit-mean exponential fading draw (linear power scale).
struct FadingDraw {
  double gain = 1.0;
};

// One airborne uplink: everything the gateway needs to arbitrate reception.
// The RSSI is fixed per attempt (one fading draw per transmission).
struct TransmissionAttempt {
  std::uint64_t id = 0;
  int node = -1;
  int channel = 0;
  int sf = kMinSf;
  double ptx_dbm = 0.0;
  double start_time = 0.0;
  double end_time = 0.0;
  double rssi_dbm = 0.0;
};

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }
inline double mw_to_dbm(double mw) { return 10.0 * std::log10(mw); }
inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

// Free-space (Friis) path gain (c / 4 pi f d)^2, dimensionless.
double friis_path_loss(double carrier_hz, double distance_m);

// Received power in dBm from transmit power plus the linear-domain budget terms.
double rssi_dbm(double ptx_dbm, double antenna_gain, double path_loss, FadingDraw fading);

// Thermal noise floor over the receive bandwidth, in dBm.
double noise_floor_dbm(double bandwidth_hz, double noise_figure_db, double noise_density_dbm_hz);

// Sum of same-channel interferer powers in mW, weighted by the inter-SF
// coupling coefficient. Time overlap is the caller's responsibility; this
// applies only the channel indicator and the coupling weight.
double interference_mw(const TransmissionAttempt& target,
                       std::span<const TransmissionAttempt* const> concurrent,
                       const SfOrthogonality& coupling);

double sinr_db(double rssi_dbm_value, double interference_mw_value, double noise_dbm);

// Standard LoRa airtime decomposition (explicit header, CRC on, LDRO off).
struct Airtime {
  double symbol_s = 0.0;
  double preamble_s = 0.0;
  double payload_s = 0.0;
  double total_s = 0.0;
  int payload_symbols = 0;
};

Airtime time_on_air(int sf, int payload_bytes, int preamble_symbols, double bandwidth_hz,
                    CodingRate cr);

inline double symbol_duration_s(int sf, double bandwidth_hz) {
  SfTable::check_sf(sf);
  return static_cast<double>(1u << sf) / bandwidth_hz;
}

// Time for `lock_preambles` preamble symbols: how long a demodulator needs
// before it latches onto a signal.
inline double preamble_lock_duration_s(int sf, double bandwidth_hz, int lock_preambles) {
  return lock_preambles * symbol_duration_s(sf, bandwidth_hz);
}

// Nominal bit rate sf * BW * CR / 2^sf; reproduces the per-SF rate table.
inline double effective_bit_rate_bps(int sf, double bandwidth_hz, CodingRate cr) {
  SfTable::check_sf(sf);
  return sf * bandwidth_hz * cr.ratio() / static_cast<double>(1u << sf);
}

}  // namespace heatlab::phy
