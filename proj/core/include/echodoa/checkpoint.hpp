#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "echodoa/network.hpp"
#include "echodoa/signal_sim.hpp"

namespace echodoa {

enum class NormalizationRule : std::uint8_t {
  /// divide by the RMS magnitude over the detected echo window
  window_rms = 1,
  /// divide by rms * exp(i phi), phi the phase of the reference channel summed
  /// over the window: removes the record's common carrier phase
  window_rms_phase = 2,
};

/// How a baseband record becomes network input.
struct InputPrep {
  NormalizationRule normalization = NormalizationRule::window_rms;
  DetectOptions detect{};
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::uint32_t epochs_run = 0;
  std::uint32_t best_epoch = 0;
  double best_heldout_loss = std::numeric_limits<double>::quiet_NaN();
  double final_train_loss = std::numeric_limits<double>::quiet_NaN();
};

struct Checkpoint {
  NetworkSpec spec;
  InputPrep prep;
  ParameterTensors<double> weights;
  TrainingMetadata meta;

  template <typename Scalar>
  static Checkpoint from_network(const Network<Scalar>& net, InputPrep prep, TrainingMetadata meta);

  /// Rebuilds the network; throws incompatible_checkpoint on shape mismatch.
  template <typename Scalar>
  Network<Scalar> network() const;
};

inline constexpr char kCheckpointMagic[] = "EDCK";
inline constexpr std::uint8_t kCheckpointVersion = 1;

/// "EDCK", u8 version, NetworkSpec, InputPrep, TrainingMetadata, u64 parameter
/// count, f64 weights in declaration order, u32 CRC32.
std::vector<std::uint8_t> checkpoint_to_bytes(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_bytes(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Human-readable dump: one "# name dims" header per tensor followed by its values.
void export_checkpoint_text(const Checkpoint& checkpoint, std::ostream& out);

}  // namespace echodoa
