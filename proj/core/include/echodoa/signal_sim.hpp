#pragma once

// Echo simulation for a small ultrasonic receive array: carrier bursts with a
// shaped envelope, calibrated AWGN, quadrature demodulation to complex
// baseband, and threshold-based echo detection.

#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace echodoa {

using cdouble = std::complex<double>;

/// SNR value meaning "add no noise at all".
inline constexpr double kNoiseless = std::numeric_limits<double>::infinity();

inline bool is_noiseless(double snr_db) noexcept { return snr_db == kNoiseless; }

enum class EnvelopeShape : std::uint8_t {
  hann = 0,   ///< raised cosine over the whole echo (short tube-like target)
  tukey = 1,  ///< flat top with 10 % cosine tapers (long wall-like echo)
};

struct SimConfig {
  double carrier_freq = 51'200.0;  // Hz
  double sound_speed = 340.0;      // m/s
  double sample_rate = 1.0e6;      // samples/s
  double echo_duration = 300e-6;   // s
  double listen_window = 8e-3;     // s
  int decimation_factor = 8;
  std::uint64_t rng_seed = 0;
  EnvelopeShape envelope = EnvelopeShape::hann;

  /// Throws Error{invalid_argument} on violated invariants.
  void validate() const;

  std::size_t listen_samples() const;
  std::size_t baseband_samples() const { return listen_samples() / decimation_factor; }
  double baseband_rate() const { return sample_rate / decimation_factor; }

  friend bool operator==(const SimConfig&, const SimConfig&) = default;
};

struct ArrayGeometry {
  std::vector<double> element_x;  // meters, strictly increasing

  /// Two elements at (0, spacing_m).
  static ArrayGeometry pair(double spacing_m);
  /// Two elements separated by `spacing_wavelengths` * `wavelength`.
  static ArrayGeometry pair_in_wavelengths(double spacing_wavelengths, double wavelength);

  std::size_t size() const noexcept { return element_x.size(); }
  /// Baseline of the first pair (element_x[1] - element_x[0]).
  double spacing() const;
  std::vector<double> spacing_wavelengths(double wavelength) const;
  void validate() const;

  friend bool operator==(const ArrayGeometry&, const ArrayGeometry&) = default;
};

struct SourceScenario {
  double doa_deg = 0.0;
  double range_m = 1.0;
  double snr_db = kNoiseless;
  std::uint64_t id = 0;

  void validate() const;
};

struct RealWaveform {
  std::size_t channels = 0;
  std::size_t samples_per_channel = 0;
  double sample_rate = 0.0;
  std::vector<double> data;  // channel-major
  /// Mean power of the clean echo over its active duration, when known.
  std::optional<double> clean_power;

  std::span<double> channel(std::size_t ch);
  std::span<const double> channel(std::size_t ch) const;
  void validate() const;
};

struct ComplexBaseband {
  std::size_t channels = 0;
  std::size_t samples_per_channel = 0;
  double sample_rate = 0.0;  // effective rate after decimation
  std::vector<cdouble> data;  // channel-major

  std::span<cdouble> channel(std::size_t ch);
  std::span<const cdouble> channel(std::size_t ch) const;
  const cdouble& at(std::size_t ch, std::size_t n) const {
    return data[ch * samples_per_channel + n];
  }
  void validate() const;

  friend bool operator==(const ComplexBaseband&, const ComplexBaseband&) = default;
};

/// Channels in reverse order: for a symmetric array, the record of the
/// mirrored scene.
ComplexBaseband swap_channels(const ComplexBaseband& base);

double wavelength(const SimConfig& config);

/// exp(-i 2 pi (x_m - x_0) sin(theta) / lambda) for each element.
Eigen::VectorXcd steering_vector(const ArrayGeometry& geometry, double doa_deg,
                                 double wavelength);

/// Noiseless multi-channel echo. Throws scenario_out_of_window when any
/// channel's burst would not fit entirely inside the listen window.
RealWaveform synthesize_echo(const SourceScenario& scenario, const ArrayGeometry& geometry,
                             const SimConfig& config);

/// Adds white Gaussian noise with variance clean_power * 10^(-snr/10).
/// kNoiseless returns the input unchanged.
RealWaveform add_awgn(RealWaveform wave, double snr_db, std::uint64_t seed);
RealWaveform add_awgn(RealWaveform wave, double snr_db, std::uint64_t seed,
                      double signal_power);

/// Length of the symmetric low-pass kernel used by to_baseband.
inline constexpr std::size_t kBasebandTaps = 129;

/// Quadrature demodulation at the carrier, linear-phase low-pass with cutoff
/// carrier/2 (zero group delay alignment), decimation. A unit cosine at the
/// carrier maps to magnitude 0.5.
ComplexBaseband to_baseband(const RealWaveform& wave, const SimConfig& config);

/// synthesize_echo -> add_awgn(scenario.snr_db, seed) -> to_baseband.
ComplexBaseband simulate_baseband(const SourceScenario& scenario, const ArrayGeometry& geometry,
                                  const SimConfig& config, std::uint64_t seed);

struct DetectOptions {
  double threshold_factor = 5.0;
  /// Leading segment assumed to be noise only, seconds.
  double noise_segment = 2e-3;
  /// Threshold never drops below this fraction of the peak magnitude
  /// (keeps noiseless records well defined).
  double floor_fraction = 1e-3;
};

struct EchoWindow {
  std::size_t begin = 0;  // first sample above threshold
  std::size_t end = 0;    // one past the last sample above threshold
  double time_of_flight = 0.0;

  std::size_t size() const noexcept { return end - begin; }
  friend bool operator==(const EchoWindow&, const EchoWindow&) = default;
};

EchoWindow detect_echo_window(const ComplexBaseband& base, double threshold_factor);
EchoWindow detect_echo_window(const ComplexBaseband& base, const DetectOptions& options);

}  // namespace echodoa
