#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "heatlab/phy.hpp"
#include "heatlab/rng.hpp"

using namespace heatlab;
using namespace heatlab::phy;

TEST_CASE("sf table matches the receiver characteristics") {
  SfTable table;
  CHECK(table.at(7).sensitivity_dbm == -127.0);
  CHECK(table.at(7).demod_threshold_db == -7.5);
  CHECK(table.at(12).sensitivity_dbm == -141.0);
  CHECK(table.at(12).demod_threshold_db == -20.0);
  for (int sf = 8; sf <= 12; ++sf) {
    CHECK(table.at(sf).sensitivity_dbm < table.at(sf - 1).sensitivity_dbm);
    CHECK(table.at(sf).demod_threshold_db < table.at(sf - 1).demod_threshold_db);
    CHECK(table.at(sf).data_rate_bps < table.at(sf - 1).data_rate_bps);
  }
  CHECK_THROWS_AS(table.at(6), std::domain_error);
  CHECK_THROWS_AS(table.at(13), std::domain_error);
}

TEST_CASE("nominal bit rate reproduces the table within 1 bit/s") {
  SfTable table;
  CodingRate cr{4, 5};
  for (int sf = kMinSf; sf <= kMaxSf; ++sf) {
    double rate = effective_bit_rate_bps(sf, 125e3, cr);
    CHECK(std::abs(rate - table.at(sf).data_rate_bps) <= 1.0);
  }
}

TEST_CASE("coupling grid is symmetric with unit diagonal") {
  SfOrthogonality c;
  for (int i = kMinSf; i <= kMaxSf; ++i) {
    CHECK(c.coeff(i, i) == 1.0);
    for (int j = kMinSf; j <= kMaxSf; ++j) {
      CHECK(c.coeff(i, j) == c.coeff(j, i));
      if (i != j) CHECK(c.coeff(i, j) < 0.11);
    }
  }
  CHECK(c.coeff(7, 12) == doctest::Approx(0.021));
}

TEST_CASE("free-space path gain") {
  // 470 MHz at 1 km
  double loss = friis_path_loss(470e6, 1000.0);
  CHECK(linear_to_db(loss) == doctest::Approx(-85.88).epsilon(0.0003));

  // doubling the distance costs exactly 6.0206 dB
  double l2 = friis_path_loss(470e6, 2000.0);
  CHECK(linear_to_db(loss) - linear_to_db(l2) == doctest::Approx(20.0 * std::log10(2.0)).epsilon(1e-9));

  // unit-gain distance d = c / (4 pi f)
  double d0 = kSpeedOfLight / (4.0 * 3.14159265358979323846 * 470e6);
  CHECK(linear_to_db(friis_path_loss(470e6, d0)) == doctest::Approx(0.0).epsilon(1e-9));

  CHECK_THROWS_AS(friis_path_loss(470e6, 0.0), std::domain_error);
  CHECK_THROWS_AS(friis_path_loss(470e6, -5.0), std::domain_error);
}

TEST_CASE("received power composition") {
  CHECK(rssi_dbm(14.0, 1.0, 1.0, FadingDraw{1.0}) == doctest::Approx(14.0));
  double loss = db_to_linear(-85.88);
  CHECK(rssi_dbm(14.0, 1.0, loss, FadingDraw{1.0}) == doctest::Approx(-71.88));
  // a half-power fade shifts any result by 10*log10(0.5)
  double base = rssi_dbm(2.0, 1.0, loss, FadingDraw{1.0});
  double faded = rssi_dbm(2.0, 1.0, loss, FadingDraw{0.5});
  CHECK(faded - base == doctest::Approx(10.0 * std::log10(0.5)).epsilon(1e-12));
}

TEST_CASE("noise floor") {
  CHECK(noise_floor_dbm(125e3, 6.0, -174.0) == doctest::Approx(-117.031).epsilon(1e-5));
  CHECK(noise_floor_dbm(1.0, 0.0, -174.0) == doctest::Approx(-174.0));
  CHECK(noise_floor_dbm(250e3, 6.0, -174.0) == doctest::Approx(-114.021).epsilon(1e-5));
  CHECK_THROWS_AS(noise_floor_dbm(0.0, 6.0, -174.0), std::domain_error);
}

namespace {
TransmissionAttempt make_attempt(std::uint64_t id, int channel, int sf, double rssi) {
  TransmissionAttempt a;
  a.id = id;
  a.channel = channel;
  a.sf = sf;
  a.rssi_dbm = rssi;
  return a;
}
}  // namespace

TEST_CASE("interference sum applies channel indicator and coupling") {
  SfOrthogonality coupling;
  TransmissionAttempt target = make_attempt(1, 0, 7, -90.0);

  SUBCASE("empty set") {
    CHECK(interference_mw(target, {}, coupling) == 0.0);
  }
  SUBCASE("same SF interferer at -100 dBm") {
    TransmissionAttempt j = make_attempt(2, 0, 7, -100.0);
    const TransmissionAttempt* list[] = {&j};
    CHECK(interference_mw(target, list, coupling) == doctest::Approx(1e-10).epsilon(1e-12));
  }
  SUBCASE("cross-SF interferer is attenuated by the coupling factor") {
    TransmissionAttempt j = make_attempt(2, 0, 12, -100.0);
    const TransmissionAttempt* list[] = {&j};
    CHECK(interference_mw(target, list, coupling) == doctest::Approx(1e-10 * 0.021).epsilon(1e-12));
  }
  SUBCASE("other channel contributes nothing") {
    TransmissionAttempt j = make_attempt(2, 3, 7, -50.0);
    const TransmissionAttempt* list[] = {&j};
    CHECK(interference_mw(target, list, coupling) == 0.0);
  }
}

TEST_CASE("sinr") {
  double noise = noise_floor_dbm(125e3, 6.0, -174.0);
  SUBCASE("no interference degenerates to snr exactly") {
    CHECK(sinr_db(-100.0, 0.0, noise) == doctest::Approx(-100.0 - noise).epsilon(1e-12));
  }
  SUBCASE("equal-power same-SF interferer") {
    double sinr = sinr_db(-100.0, dbm_to_mw(-100.0), noise);
    CHECK(sinr == doctest::Approx(-0.085).epsilon(0.01));
  }
  SUBCASE("SF7 target against an SF12 interferer stays demodulable") {
    SfTable table;
    double interference = dbm_to_mw(-100.0) * 0.021;
    double sinr = sinr_db(-100.0, interference, noise);
    CHECK(sinr == doctest::Approx(13.9).epsilon(0.03));
    CHECK(sinr > table.at(7).demod_threshold_db);
  }
}

TEST_CASE("airtime") {
  CodingRate cr{4, 5};
  SUBCASE("symbol period") {
    CHECK(symbol_duration_s(7, 125e3) == doctest::Approx(1.024e-3).epsilon(1e-12));
    CHECK(symbol_duration_s(12, 125e3) == doctest::Approx(32.768e-3).epsilon(1e-12));
  }
  SUBCASE("20-byte SF7 packet") {
    Airtime a = time_on_air(7, 20, 8, 125e3, cr);
    CHECK(a.payload_symbols == 43);
    CHECK(a.total_s == doctest::Approx(0.056576).epsilon(2e-4));
  }
  SUBCASE("lock duration is lock_preambles symbol periods") {
    CHECK(preamble_lock_duration_s(7, 125e3, 4) == doctest::Approx(4 * 1.024e-3));
  }
  SUBCASE("airtime-implied rate approaches the nominal rate for large payloads") {
    SfTable table;
    for (int sf = kMinSf; sf <= kMaxSf; ++sf) {
      Airtime a = time_on_air(sf, 255, 8, 125e3, cr);
      double rate = 8.0 * 255 / a.payload_s;
      CHECK(std::abs(rate - table.at(sf).data_rate_bps) / table.at(sf).data_rate_bps < 0.05);
    }
  }
  SUBCASE("sf range is enforced") {
    CHECK_THROWS_AS(time_on_air(6, 20, 8, 125e3, cr), std::domain_error);
    CHECK_THROWS_AS(time_on_air(13, 20, 8, 125e3, cr), std::domain_error);
  }
}

TEST_CASE("fading draws have unit mean and exponential tail") {
  Rng rng(20240901);
  const int n = 100000;
  double sum = 0.0;
  int above_one = 0;
  for (int i = 0; i < n; ++i) {
    double z = rng.unit_exponential();
    CHECK(z > 0.0);
    sum += z;
    if (z > 1.0) above_one += 1;
  }
  double mean = sum / n;
  CHECK(mean > 0.99);
  CHECK(mean < 1.01);
  double p_above = static_cast<double>(above_one) / n;
  CHECK(std::abs(p_above - std::exp(-1.0)) < 0.01);
}
