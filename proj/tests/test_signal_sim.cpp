#include <doctest.h>

#include <cmath>
#include <numbers>

#include "echodoa/config_file.hpp"
#include "echodoa/error.hpp"
#include "echodoa/signal_sim.hpp"

using namespace echodoa;
using doctest::Approx;

namespace {

const SimConfig kConfig{};
const double kLambda = wavelength(kConfig);

ArrayGeometry half_wave() { return ArrayGeometry::pair_in_wavelengths(0.5, kLambda); }

std::size_t first_nonzero(std::span<const double> x) {
  for (std::size_t n = 0; n < x.size(); ++n)
    if (x[n] != 0.0) return n;
  return x.size();
}

double energy_centroid(std::span<const double> x) {
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < x.size(); ++n) {
    num += static_cast<double>(n) * x[n] * x[n];
    den += x[n] * x[n];
  }
  return num / den;
}

}  // namespace

TEST_CASE("wavelength is c / f") {
  CHECK(wavelength(kConfig) == Approx(6.640625e-3).epsilon(1e-12));
  SimConfig c;
  c.carrier_freq = 40'000.0;
  CHECK(wavelength(c) == Approx(8.5e-3).epsilon(1e-12));
  c.carrier_freq = 340.0;
  c.sample_rate = 10'000.0;
  CHECK(wavelength(c) == 1.0);
}

TEST_CASE("SimConfig invariants") {
  SimConfig c;
  CHECK_NOTHROW(c.validate());
  c.sample_rate = 100'000.0;  // below 2 x carrier
  CHECK_THROWS_AS(c.validate(), Error);
  c = SimConfig{};
  c.echo_duration = 9e-3;
  CHECK_THROWS_AS(c.validate(), Error);
  c = SimConfig{};
  c.decimation_factor = 7;  // 8000 samples not divisible by 7
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(SimConfig{}.listen_samples() == 8000);
  CHECK(SimConfig{}.baseband_samples() == 1000);
}

TEST_CASE("steering vectors") {
  SUBCASE("broadside is all ones exactly") {
    const auto a = steering_vector(half_wave(), 0.0, kLambda);
    CHECK(a(0) == std::complex<double>(1.0, 0.0));
    CHECK(a(1) == std::complex<double>(1.0, 0.0));
  }
  SUBCASE("half wavelength, 30 deg -> [1, -i]") {
    const auto a = steering_vector(half_wave(), 30.0, kLambda);
    CHECK(std::abs(a(0) - 1.0) < 1e-12);
    CHECK(std::abs(a(1) - std::complex<double>(0.0, -1.0)) < 1e-12);
  }
  SUBCASE("1.5 wavelengths, 30 deg -> [1, +i]") {
    const auto a = steering_vector(ArrayGeometry::pair_in_wavelengths(1.5, kLambda), 30.0, kLambda);
    CHECK(std::abs(a(1) - std::complex<double>(0.0, 1.0)) < 1e-12);
  }
  SUBCASE("unit modulus and conjugate symmetry") {
    for (double theta = -90.0; theta <= 90.0; theta += 7.5) {
      const auto a = steering_vector(ArrayGeometry::pair_in_wavelengths(1.3, kLambda), theta, kLambda);
      const auto b = steering_vector(ArrayGeometry::pair_in_wavelengths(1.3, kLambda), -theta, kLambda);
      for (int m = 0; m < 2; ++m) {
        CHECK(std::abs(std::abs(a(m)) - 1.0) < 1e-12);
        CHECK(std::abs(b(m) - std::conj(a(m))) < 1e-12);
      }
    }
  }
}

TEST_CASE("synthesize_echo geometry") {
  SUBCASE("broadside channels are bit-identical") {
    const auto w = synthesize_echo({0.0, 0.9, kNoiseless, 0}, half_wave(), kConfig);
    const auto c0 = w.channel(0), c1 = w.channel(1);
    CHECK(std::equal(c0.begin(), c0.end(), c1.begin(), c1.end()));
  }
  SUBCASE("onset at 2r/c = 4.0 ms for r = 0.68 m") {
    const auto w = synthesize_echo({0.0, 0.68, kNoiseless, 0}, half_wave(), kConfig);
    const double t0 = static_cast<double>(first_nonzero(w.channel(0))) / kConfig.sample_rate;
    // The Hann envelope is exactly zero at its first sample, so allow one sample.
    CHECK(std::abs(t0 - 4.0e-3) <= 1.0e-6 + 1e-12);
  }
  SUBCASE("30 deg at half wavelength: channel 1 lags by d sin(theta) / c") {
    // (lambda / 2) * sin 30 / c is a quarter carrier period, 4.8828 us.
    const auto w = synthesize_echo({30.0, 0.68, kNoiseless, 0}, half_wave(), kConfig);
    const double lag = (energy_centroid(w.channel(1)) - energy_centroid(w.channel(0))) / kConfig.sample_rate;
    CHECK(lag == Approx(4.8828125e-6).epsilon(0.01));
  }
  SUBCASE("clean power of a Hann-shaped carrier burst") {
    // mean of (hann * cos)^2 over the support: 3/8 * 1/2
    const auto w = synthesize_echo({0.0, 0.68, kNoiseless, 0}, half_wave(), kConfig);
    REQUIRE(w.clean_power.has_value());
    CHECK(*w.clean_power == Approx(0.1875).epsilon(0.01));
  }
  SUBCASE("out-of-window scenarios are rejected") {
    try {
      (void)synthesize_echo({0.0, 1.40, kNoiseless, 0}, half_wave(), kConfig);
      FAIL("expected scenario_out_of_window");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::scenario_out_of_window);
    }
  }
}

TEST_CASE("add_awgn noise level") {
  RealWaveform w;
  w.channels = 2;
  w.samples_per_channel = 200'000;
  w.sample_rate = 1e6;
  w.data.assign(w.channels * w.samples_per_channel, 0.0);

  auto variance = [](const RealWaveform& x) {
    double s = 0.0;
    for (double v : x.data) s += v * v;
    return s / static_cast<double>(x.data.size());
  };
  CHECK(variance(add_awgn(w, 0.0, 3, 1.0)) == Approx(1.0).epsilon(0.01));
  CHECK(variance(add_awgn(w, -10.0, 3, 1.0)) == Approx(10.0).epsilon(0.01));

  SUBCASE("noiseless sentinel is a no-op") {
    auto clean = synthesize_echo({10.0, 0.8, kNoiseless, 0}, half_wave(), kConfig);
    CHECK(add_awgn(clean, kNoiseless, 9).data == clean.data);
  }
  SUBCASE("missing signal power") {
    try {
      (void)add_awgn(w, 0.0, 3);
      FAIL("expected missing_signal_power");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::missing_signal_power);
    }
  }
  SUBCASE("deterministic in the seed") {
    CHECK(add_awgn(w, 5.0, 11, 1.0).data == add_awgn(w, 5.0, 11, 1.0).data);
    CHECK(add_awgn(w, 5.0, 11, 1.0).data != add_awgn(w, 5.0, 12, 1.0).data);
  }
}

TEST_CASE("measured SNR matches the request within 0.5 dB over 20 seeds") {
  const auto clean = synthesize_echo({20.0, 0.9, kNoiseless, 0}, half_wave(), kConfig);
  const auto onset = first_nonzero(clean.channel(0));
  for (double snr : {-10.0, 0.0, 10.0}) {
    double noise = 0.0;
    std::size_t count = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto noisy = add_awgn(clean, snr, seed);
      for (std::size_t ch = 0; ch < 2; ++ch)
        for (std::size_t n = 0; n + 10 < onset; ++n) {
          noise += noisy.channel(ch)[n] * noisy.channel(ch)[n];
          ++count;
        }
    }
    const double measured = 10.0 * std::log10(*clean.clean_power / (noise / static_cast<double>(count)));
    CHECK(std::abs(measured - snr) < 0.5);
  }
}

TEST_CASE("to_baseband") {
  SUBCASE("unit carrier tone maps to magnitude 0.5, flat within 1%") {
    RealWaveform w;
    w.channels = 1;
    w.samples_per_channel = kConfig.listen_samples();
    w.sample_rate = kConfig.sample_rate;
    for (std::size_t n = 0; n < w.samples_per_channel; ++n)
      w.data.push_back(std::cos(2.0 * std::numbers::pi * kConfig.carrier_freq * static_cast<double>(n) / w.sample_rate));
    const auto b = to_baseband(w, kConfig);
    CHECK(b.samples_per_channel == 1000);
    CHECK(b.sample_rate == 125'000.0);
    for (std::size_t n = 20; n < 980; ++n) CHECK(std::abs(std::abs(b.at(0, n)) - 0.5) < 0.005);
  }
  SUBCASE("all-zero waveform gives all-zero baseband") {
    RealWaveform w;
    w.channels = 2;
    w.samples_per_channel = kConfig.listen_samples();
    w.sample_rate = kConfig.sample_rate;
    w.data.assign(2 * w.samples_per_channel, 0.0);
    const auto b = to_baseband(w, kConfig);
    for (auto z : b.data) CHECK(z == std::complex<double>(0.0, 0.0));
  }
  SUBCASE("30 deg at half wavelength gives a pi/2 inter-channel phase") {
    const auto b = simulate_baseband({30.0, 0.68, kNoiseless, 0}, half_wave(), kConfig, 0);
    const auto win = detect_echo_window(b, 5.0);
    for (std::size_t n = win.begin + 5; n + 5 < win.end; ++n) {
      const double dphi = std::arg(b.at(0, n) * std::conj(b.at(1, n)));
      CHECK(dphi == Approx(std::numbers::pi / 2).epsilon(0.01));
    }
  }
  SUBCASE("band energy preserved within 1%") {
    // The complex envelope of a real burst carries half its energy.
    const auto w = synthesize_echo({0.0, 0.68, kNoiseless, 0}, half_wave(), kConfig);
    const auto b = to_baseband(w, kConfig);
    double raw = 0.0, base = 0.0;
    for (double v : w.channel(0)) raw += v * v;
    for (std::size_t n = 0; n < b.samples_per_channel; ++n) base += std::norm(b.at(0, n));
    CHECK(base * kConfig.decimation_factor == Approx(raw / 2.0).epsilon(0.01));
  }
}

TEST_CASE("detect_echo_window") {
  SUBCASE("noiseless onset within 50 us of 4.0 ms") {
    const auto b = simulate_baseband({0.0, 0.68, kNoiseless, 0}, half_wave(), kConfig, 0);
    const auto win = detect_echo_window(b, 5.0);
    CHECK(std::abs(win.time_of_flight - 4.0e-3) <= 50e-6);
  }
  SUBCASE("20 dB echo matches the noiseless interval within 10 samples") {
    const auto clean = simulate_baseband({0.0, 0.68, kNoiseless, 0}, half_wave(), kConfig, 0);
    const auto ref = detect_echo_window(clean, 5.0);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto noisy = simulate_baseband({0.0, 0.68, 20.0, 0}, half_wave(), kConfig, seed);
      const auto win = detect_echo_window(noisy, 5.0);
      CHECK(std::abs(static_cast<long>(win.begin) - static_cast<long>(ref.begin)) <= 10);
      CHECK(std::abs(static_cast<long>(win.end) - static_cast<long>(ref.end)) <= 10);
    }
  }
  SUBCASE("all-zero input -> no_echo_found") {
    ComplexBaseband b;
    b.channels = 2;
    b.samples_per_channel = 1000;
    b.sample_rate = 125'000.0;
    b.data.assign(2000, {0.0, 0.0});
    try {
      (void)detect_echo_window(b, 5.0);
      FAIL("expected no_echo_found");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::no_echo_found);
    }
  }
}

TEST_CASE("simulation is deterministic") {
  const SourceScenario sc{-25.0, 1.1, 3.0, 0};
  CHECK(simulate_baseband(sc, half_wave(), kConfig, 77) == simulate_baseband(sc, half_wave(), kConfig, 77));
}

TEST_CASE("config file") {
  const auto map = parse_key_values("# demo\ncarrier_freq = 40000\nsound_speed=343\nenvelope = tukey\nrng_seed = 18446744073709551615\n");
  const SimConfig c = apply_sim_config(map, {}, true);
  CHECK(c.carrier_freq == 40000.0);
  CHECK(c.sound_speed == 343.0);
  CHECK(c.envelope == EnvelopeShape::tukey);
  CHECK(c.rng_seed == 18446744073709551615ULL);
  CHECK(apply_sim_config(parse_key_values(to_key_value_text(c)), {}, true) == c);
  CHECK_THROWS_AS(apply_sim_config(parse_key_values("bogus = 1\n"), {}, true), Error);
  CHECK_THROWS_AS(apply_sim_config(parse_key_values("sound_speed = fast\n"), {}, true), Error);
}

TEST_CASE("swap_channels reverses channel order") {
  ComplexBaseband b;
  b.channels = 2;
  b.samples_per_channel = 2;
  b.sample_rate = 1.0;
  b.data = {cdouble{1, 0}, cdouble{2, 0}, cdouble{0, 3}, cdouble{0, 4}};
  const auto s = swap_channels(b);
  CHECK(s.data == std::vector<cdouble>{cdouble{0, 3}, cdouble{0, 4}, cdouble{1, 0}, cdouble{2, 0}});
  CHECK(swap_channels(s) == b);
}
