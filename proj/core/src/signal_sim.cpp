#include "echodoa/signal_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "echodoa/counter_rng.hpp"
#include "echodoa/error.hpp"

namespace echodoa {
namespace {

constexpr double kPi = std::numbers::pi;

double deg2rad(double deg) { return deg * kPi / 180.0; }

double envelope_at(EnvelopeShape shape, double u) {
  // u in [0, 1) across the echo's active duration
  switch (shape) {
    case EnvelopeShape::hann: {
      const double s = std::sin(kPi * u);
      return s * s;
    }
    case EnvelopeShape::tukey: {
      constexpr double taper = 0.1;
      if (u < taper) return 0.5 * (1.0 - std::cos(kPi * u / taper));
      if (u > 1.0 - taper) return 0.5 * (1.0 - std::cos(kPi * (1.0 - u) / taper));
      return 1.0;
    }
  }
  return 0.0;
}

std::vector<double> lowpass_kernel(std::size_t taps, double cutoff_normalized) {
  // Hamming-windowed sinc, unit DC gain.
  std::vector<double> h(taps);
  const double mid = static_cast<double>(taps - 1) / 2.0;
  double sum = 0.0;
  for (std::size_t k = 0; k < taps; ++k) {
    const double x = static_cast<double>(k) - mid;
    const double sinc = (x == 0.0) ? 2.0 * cutoff_normalized
                                   : std::sin(2.0 * kPi * cutoff_normalized * x) / (kPi * x);
    const double w = 0.54 - 0.46 * std::cos(2.0 * kPi * static_cast<double>(k) /
                                            static_cast<double>(taps - 1));
    h[k] = sinc * w;
    sum += h[k];
  }
  for (double& v : h) v /= sum;
  return h;
}

}  // namespace

void SimConfig::validate() const {
  auto positive = [](double v, const char* name) {
    require(std::isfinite(v) && v > 0.0, ErrorKind::invalid_argument,
            std::string("SimConfig: ") + name + " must be finite and > 0");
  };
  positive(carrier_freq, "carrier_freq");
  positive(sound_speed, "sound_speed");
  positive(sample_rate, "sample_rate");
  positive(echo_duration, "echo_duration");
  positive(listen_window, "listen_window");
  require(decimation_factor >= 1, ErrorKind::invalid_argument,
          "SimConfig: decimation_factor must be >= 1");
  require(sample_rate > 2.0 * carrier_freq, ErrorKind::invalid_argument,
          "SimConfig: sample_rate must exceed twice the carrier frequency");
  require(echo_duration < listen_window, ErrorKind::invalid_argument,
          "SimConfig: echo_duration must be shorter than listen_window");
  const std::size_t n = listen_samples();
  require(n > 0 && n % static_cast<std::size_t>(decimation_factor) == 0,
          ErrorKind::invalid_argument,
          "SimConfig: decimation_factor must divide the listen-window sample count");
}

std::size_t SimConfig::listen_samples() const {
  return static_cast<std::size_t>(std::llround(listen_window * sample_rate));
}

ArrayGeometry ArrayGeometry::pair(double spacing_m) { return ArrayGeometry{{0.0, spacing_m}}; }

ArrayGeometry ArrayGeometry::pair_in_wavelengths(double spacing_wavelengths, double wavelength) {
  return pair(spacing_wavelengths * wavelength);
}

double ArrayGeometry::spacing() const {
  require(element_x.size() >= 2, ErrorKind::invalid_argument,
          "ArrayGeometry: need at least two elements");
  return element_x[1] - element_x[0];
}

std::vector<double> ArrayGeometry::spacing_wavelengths(double wavelength) const {
  std::vector<double> out;
  for (std::size_t m = 0; m + 1 < element_x.size(); ++m)
    out.push_back((element_x[m + 1] - element_x[m]) / wavelength);
  return out;
}

void ArrayGeometry::validate() const {
  require(element_x.size() >= 2, ErrorKind::invalid_argument,
          "ArrayGeometry: need at least two elements");
  for (std::size_t m = 0; m < element_x.size(); ++m) {
    require(std::isfinite(element_x[m]), ErrorKind::invalid_argument,
            "ArrayGeometry: non-finite element position");
    if (m > 0)
      require(element_x[m] > element_x[m - 1], ErrorKind::invalid_argument,
              "ArrayGeometry: element positions must be strictly increasing");
  }
}

void SourceScenario::validate() const {
  require(std::isfinite(doa_deg) && std::abs(doa_deg) <= 90.0, ErrorKind::invalid_argument,
          "SourceScenario: doa_deg must lie in [-90, 90]");
  require(std::isfinite(range_m) && range_m > 0.0, ErrorKind::invalid_argument,
          "SourceScenario: range_m must be > 0");
  require(!std::isnan(snr_db) && snr_db != -kNoiseless, ErrorKind::invalid_argument,
          "SourceScenario: snr_db must be a number or the noiseless value");
}

std::span<double> RealWaveform::channel(std::size_t ch) {
  return {data.data() + ch * samples_per_channel, samples_per_channel};
}

std::span<const double> RealWaveform::channel(std::size_t ch) const {
  return {data.data() + ch * samples_per_channel, samples_per_channel};
}

void RealWaveform::validate() const {
  require(data.size() == channels * samples_per_channel, ErrorKind::shape_mismatch,
          "RealWaveform: data size does not match dimensions");
  require(sample_rate > 0.0, ErrorKind::invalid_argument, "RealWaveform: sample_rate must be > 0");
  require(std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); }),
          ErrorKind::invalid_argument, "RealWaveform: non-finite sample");
}

std::span<cdouble> ComplexBaseband::channel(std::size_t ch) {
  return {data.data() + ch * samples_per_channel, samples_per_channel};
}

std::span<const cdouble> ComplexBaseband::channel(std::size_t ch) const {
  return {data.data() + ch * samples_per_channel, samples_per_channel};
}

void ComplexBaseband::validate() const {
  require(data.size() == channels * samples_per_channel, ErrorKind::shape_mismatch,
          "ComplexBaseband: data size does not match dimensions");
  require(sample_rate > 0.0, ErrorKind::invalid_argument,
          "ComplexBaseband: sample_rate must be > 0");
  require(std::all_of(data.begin(), data.end(),
                      [](const cdouble& v) { return std::isfinite(v.real()) && std::isfinite(v.imag()); }),
          ErrorKind::invalid_argument, "ComplexBaseband: non-finite sample");
}

double wavelength(const SimConfig& config) { return config.sound_speed / config.carrier_freq; }

Eigen::VectorXcd steering_vector(const ArrayGeometry& geometry, double doa_deg,
                                 double wavelength) {
  const std::size_t m_count = geometry.size();
  Eigen::VectorXcd a(static_cast<Eigen::Index>(m_count));
  const double s = std::sin(deg2rad(doa_deg));
  for (std::size_t m = 0; m < m_count; ++m) {
    const double offset = geometry.element_x[m] - geometry.element_x[0];
    const double phase = -2.0 * kPi * offset * s / wavelength;
    a(static_cast<Eigen::Index>(m)) = (m == 0) ? cdouble{1.0, 0.0} : std::polar(1.0, phase);
  }
  return a;
}

RealWaveform synthesize_echo(const SourceScenario& scenario, const ArrayGeometry& geometry,
                             const SimConfig& config) {
  config.validate();
  geometry.validate();
  scenario.validate();

  const std::size_t n_samples = config.listen_samples();
  RealWaveform wave;
  wave.channels = geometry.size();
  wave.samples_per_channel = n_samples;
  wave.sample_rate = config.sample_rate;
  wave.data.assign(wave.channels * n_samples, 0.0);

  const double round_trip = 2.0 * scenario.range_m / config.sound_speed;
  const double sin_theta = std::sin(deg2rad(scenario.doa_deg));
  const double dt = 1.0 / config.sample_rate;

  double energy = 0.0;
  std::size_t active = 0;
  for (std::size_t m = 0; m < geometry.size(); ++m) {
    const double offset = geometry.element_x[m] - geometry.element_x[0];
    const double onset = round_trip + offset * sin_theta / config.sound_speed;
    require(onset >= 0.0 && onset + config.echo_duration <= config.listen_window,
            ErrorKind::scenario_out_of_window,
            "synthesize_echo: echo does not fit inside the listen window (range " +
                std::to_string(scenario.range_m) + " m)");
    auto out = wave.channel(m);
    const auto first = static_cast<std::size_t>(std::ceil(onset * config.sample_rate));
    for (std::size_t n = first; n < n_samples; ++n) {
      const double t = static_cast<double>(n) * dt - onset;
      if (t < 0.0) continue;
      const double u = t / config.echo_duration;
      if (u >= 1.0) break;
      const double cycles = config.carrier_freq * t;
      const double v = envelope_at(config.envelope, u) *
                       std::cos(2.0 * kPi * (cycles - std::floor(cycles)));
      out[n] = v;
      energy += v * v;
      ++active;
    }
  }
  wave.clean_power = active > 0 ? energy / static_cast<double>(active) : 0.0;
  return wave;
}

RealWaveform add_awgn(RealWaveform wave, double snr_db, std::uint64_t seed) {
  if (is_noiseless(snr_db)) return wave;
  require(wave.clean_power.has_value() && *wave.clean_power > 0.0,
          ErrorKind::missing_signal_power,
          "add_awgn: clean signal power unknown; pass it explicitly");
  const double power = *wave.clean_power;
  return add_awgn(std::move(wave), snr_db, seed, power);
}

RealWaveform add_awgn(RealWaveform wave, double snr_db, std::uint64_t seed,
                      double signal_power) {
  if (is_noiseless(snr_db)) return wave;
  require(std::isfinite(snr_db), ErrorKind::invalid_argument, "add_awgn: snr_db must be finite");
  require(std::isfinite(signal_power) && signal_power > 0.0, ErrorKind::missing_signal_power,
          "add_awgn: signal power must be > 0");
  const double sigma = std::sqrt(signal_power * std::pow(10.0, -snr_db / 10.0));
  for (std::size_t ch = 0; ch < wave.channels; ++ch) {
    auto samples = wave.channel(ch);
    for (std::size_t n = 0; n < samples.size(); ++n)
      samples[n] += sigma * normal_at(hash_key(seed, ch, n));
  }
  return wave;
}

ComplexBaseband swap_channels(const ComplexBaseband& base) {
  ComplexBaseband out = base;
  for (std::size_t ch = 0; ch < base.channels; ++ch) {
    const auto src = base.channel(base.channels - 1 - ch);
    std::copy(src.begin(), src.end(), out.channel(ch).begin());
  }
  return out;
}

ComplexBaseband to_baseband(const RealWaveform& wave, const SimConfig& config) {
  config.validate();
  require(wave.data.size() == wave.channels * wave.samples_per_channel, ErrorKind::shape_mismatch,
          "to_baseband: inconsistent waveform dimensions");
  require(std::abs(wave.sample_rate - config.sample_rate) <= 1e-9 * config.sample_rate,
          ErrorKind::rate_mismatch, "to_baseband: waveform sample rate differs from config");

  const auto decim = static_cast<std::size_t>(config.decimation_factor);
  const std::size_t n_in = wave.samples_per_channel;
  const std::size_t n_out = n_in / decim;
  const auto kernel = lowpass_kernel(kBasebandTaps, 0.5 * config.carrier_freq / config.sample_rate);
  const auto half = static_cast<std::ptrdiff_t>(kBasebandTaps / 2);

  // Local oscillator, shared by all channels.
  std::vector<cdouble> lo(n_in);
  const double cycles_per_sample = config.carrier_freq / config.sample_rate;
  for (std::size_t n = 0; n < n_in; ++n) {
    const double cycles = cycles_per_sample * static_cast<double>(n);
    lo[n] = std::polar(1.0, -2.0 * kPi * (cycles - std::floor(cycles)));
  }

  ComplexBaseband out;
  out.channels = wave.channels;
  out.samples_per_channel = n_out;
  out.sample_rate = config.sample_rate / static_cast<double>(decim);
  out.data.assign(out.channels * n_out, cdouble{});

  std::vector<cdouble> mixed(n_in);
  for (std::size_t ch = 0; ch < wave.channels; ++ch) {
    const auto in = wave.channel(ch);
    for (std::size_t n = 0; n < n_in; ++n) mixed[n] = in[n] * lo[n];
    auto dst = out.channel(ch);
    for (std::size_t j = 0; j < n_out; ++j) {
      const auto center = static_cast<std::ptrdiff_t>(j * decim);
      const std::ptrdiff_t k_lo = std::max<std::ptrdiff_t>(0, half - center);
      const std::ptrdiff_t k_hi = std::min<std::ptrdiff_t>(
          static_cast<std::ptrdiff_t>(kBasebandTaps),
          static_cast<std::ptrdiff_t>(n_in) - center + half);
      cdouble acc{};
      for (std::ptrdiff_t k = k_lo; k < k_hi; ++k)
        acc += kernel[static_cast<std::size_t>(k)] *
               mixed[static_cast<std::size_t>(center + k - half)];
      dst[j] = acc;
    }
  }
  return out;
}

ComplexBaseband simulate_baseband(const SourceScenario& scenario, const ArrayGeometry& geometry,
                                  const SimConfig& config, std::uint64_t seed) {
  return to_baseband(add_awgn(synthesize_echo(scenario, geometry, config), scenario.snr_db, seed),
                     config);
}

EchoWindow detect_echo_window(const ComplexBaseband& base, double threshold_factor) {
  DetectOptions options;
  options.threshold_factor = threshold_factor;
  return detect_echo_window(base, options);
}

EchoWindow detect_echo_window(const ComplexBaseband& base, const DetectOptions& options) {
  require(options.threshold_factor > 1.0, ErrorKind::invalid_argument,
          "detect_echo_window: threshold_factor must be > 1");
  require(base.channels >= 1 && base.data.size() == base.channels * base.samples_per_channel,
          ErrorKind::shape_mismatch, "detect_echo_window: malformed baseband");
  const std::size_t n = base.samples_per_channel;
  require(n > 0, ErrorKind::no_echo_found, "detect_echo_window: empty record");

  const auto ref = base.channel(0);
  std::vector<double> mag(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mag[i] = std::abs(ref[i]);
    peak = std::max(peak, mag[i]);
  }
  require(peak > 0.0, ErrorKind::no_echo_found, "detect_echo_window: record is all zero");

  const std::size_t seg = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(options.noise_segment * base.sample_rate)), 1, n);
  std::vector<double> lead(mag.begin(), mag.begin() + static_cast<std::ptrdiff_t>(seg));
  auto mid = lead.begin() + static_cast<std::ptrdiff_t>(seg / 2);
  std::nth_element(lead.begin(), mid, lead.end());
  double median = *mid;
  if (seg % 2 == 0) {
    const double lower = *std::max_element(lead.begin(), mid);
    median = 0.5 * (median + lower);
  }
  const double threshold =
      std::max(options.threshold_factor * median, options.floor_fraction * peak);

  std::size_t onset = n;
  for (std::size_t i = 0; i < n; ++i) {
    if (mag[i] > threshold) {
      onset = i;
      break;
    }
  }
  require(onset < n, ErrorKind::no_echo_found,
          "detect_echo_window: no sample crosses the detection threshold");
  std::size_t end = onset + 1;
  while (end < n && mag[end] > threshold) ++end;
  return EchoWindow{onset, end, static_cast<double>(onset) / base.sample_rate};
}

}  // namespace echodoa
