#include "heatlab/phy.hpp"

#include <cmath>

namespace heatlab::phy {

namespace {
constexpr double kPi = 3.14159265358979323846;
}

SfTable::SfTable()
    : rows_{{{7, -127.0, -7.5, 5469.0},
             {8, -129.0, -10.0, 3125.0},
             {9, -132.5, -12.5, 1758.0},
             {10, -135.5, -15.0, 977.0},
             {11, -138.0, -17.5, 537.0},
             {12, -141.0, -20.0, 293.0}}} {
  for (int i = 1; i < kNumSf; ++i) {
    if (!(rows_[i].sensitivity_dbm < rows_[i - 1].sensitivity_dbm) ||
        !(rows_[i].demod_threshold_db < rows_[i - 1].demod_threshold_db) ||
        !(rows_[i].data_rate_bps < rows_[i - 1].data_rate_bps)) {
      throw std::logic_error("SF table rows must be strictly decreasing in sf");
    }
  }
}

SfOrthogonality::SfOrthogonality()
    : grid_{{{1.0, 0.104, 0.062, 0.041, 0.029, 0.021},
             {0.104, 1.0, 0.073, 0.043, 0.029, 0.020},
             {0.062, 0.073, 1.0, 0.052, 0.030, 0.020},
             {0.041, 0.043, 0.052, 1.0, 0.037, 0.021},
             {0.029, 0.029, 0.030, 0.037, 1.0, 0.026},
             {0.021, 0.020, 0.020, 0.021, 0.026, 1.0}}} {
  for (int i = 0; i < kNumSf; ++i) {
    if (grid_[i][i] != 1.0) throw std::logic_error("coupling diagonal must be 1");
    for (int j = 0; j < kNumSf; ++j) {
      if (grid_[i][j] != grid_[j][i]) throw std::logic_error("coupling grid must be symmetric");
      if (i != j && grid_[i][j] >= 0.11) throw std::logic_error("off-diagonal coupling must be < 0.11");
    }
  }
}

double friis_path_loss(double carrier_hz, double distance_m) {
  if (distance_m <= 0) throw std::domain_error("distance must be > 0 (node co-located with gateway)");
  if (carrier_hz <= 0) throw std::domain_error("carrier frequency must be > 0");
  double amplitude = kSpeedOfLight / (4.0 * kPi * carrier_hz * distance_m);
  return amplitude * amplitude;
}

double rssi_dbm(double ptx_dbm, double antenna_gain, double path_loss, FadingDraw fading) {
  if (path_loss <= 0) throw std::domain_error("path loss factor must be > 0");
  if (fading.gain <= 0) throw std::domain_error("fading draw must be > 0");
  return ptx_dbm + linear_to_db(antenna_gain * path_loss * fading.gain);
}

double noise_floor_dbm(double bandwidth_hz, double noise_figure_db, double noise_density_dbm_hz) {
  if (bandwidth_hz <= 0) throw std::domain_error("bandwidth must be > 0");
  return noise_density_dbm_hz + noise_figure_db + 10.0 * std::log10(bandwidth_hz);
}

double interference_mw(const TransmissionAttempt& target,
                       std::span<const TransmissionAttempt* const> concurrent,
                       const SfOrthogonality& coupling) {
  double sum = 0.0;
  for (const TransmissionAttempt* other : concurrent) {
    if (other->id == target.id) continue;
    if (other->channel != target.channel) continue;
    sum += dbm_to_mw(other->rssi_dbm) * coupling.coeff(target.sf, other->sf);
  }
  return sum;
}

double sinr_db(double rssi_dbm_value, double interference_mw_value, double noise_dbm) {
  if (interference_mw_value < 0) throw std::domain_error("interference must be >= 0");
  double signal = dbm_to_mw(rssi_dbm_value);
  double denom = dbm_to_mw(noise_dbm) + interference_mw_value;
  return linear_to_db(signal / denom);
}

Airtime time_on_air(int sf, int payload_bytes, int preamble_symbols, double bandwidth_hz,
                    CodingRate cr) {
  SfTable::check_sf(sf);
  if (payload_bytes < 0) throw std::domain_error("payload size must be >= 0");
  Airtime a;
  a.symbol_s = symbol_duration_s(sf, bandwidth_hz);
  a.preamble_s = (preamble_symbols + 4.25) * a.symbol_s;
  // Explicit header (20 bits) and CRC (16 bits) on, low-data-rate optimization off.
  double numerator = 8.0 * payload_bytes - 4.0 * sf + 28.0 + 16.0;
  int blocks = static_cast<int>(std::ceil(numerator / (4.0 * sf)));
  a.payload_symbols = 8 + std::max(blocks * cr.denominator, 0);
  a.payload_s = a.payload_symbols * a.symbol_s;
  a.total_s = a.preamble_s + a.payload_s;
  return a;
}

}  // namespace heatlab::phy
