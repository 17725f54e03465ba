#pragma once

// Training loop and inference for the convolutional regressor.

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "echodoa/adam.hpp"
#include "echodoa/checkpoint.hpp"
#include "echodoa/dataset.hpp"
#include "echodoa/doa_estimate.hpp"

namespace echodoa {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double train_fraction = 0.8;
  std::uint64_t shuffle_seed = 7;
  /// Stop after this many epochs without held-out improvement; 0 disables.
  int patience = 0;
  /// Also train on every record with its channels swapped and label negated
  /// (valid for a symmetric two-element array). The swapped record is prepared
  /// from scratch, so detection runs on its own reference channel.
  bool mirror_augment = true;
  /// Cosine learning-rate decay: the last epoch runs at this fraction of the
  /// base rate. 1 keeps the rate constant.
  double final_lr_fraction = 0.02;
  /// Draw each training crop up to this many samples off the window center,
  /// fresh every epoch; 0 disables.
  int jitter_samples = 16;
  /// Rotate every training input by a random common carrier phase each epoch.
  bool phase_augment = true;

  void validate() const;
};

/// Network input for one record, [rows][T] row-major, or nullopt when no echo
/// is detected. Rows are ch0.re, ch0.im, ch1.re, ch1.im, ...; the T-sample
/// crop is centered on the detected window and zero-padded at the edges.
template <typename Scalar>
std::optional<std::vector<Scalar>> prepare_input(const ComplexBaseband& base, const NetworkSpec& spec,
                                                 const InputPrep& prep);

/// Swaps the channel row blocks of a prepared two-channel input.
template <typename Scalar>
std::vector<Scalar> mirror_input(std::span<const Scalar> input, const NetworkSpec& spec);

inline double label_from_degrees(double doa_deg) noexcept { return doa_deg / 90.0; }
inline double degrees_from_output(double output) noexcept { return output * 90.0; }

struct EpochStats {
  int epoch = 0;  ///< 1-based
  double train_loss = 0.0;
  double heldout_loss = 0.0;  ///< NaN without held-out records
  double heldout_mae_deg = 0.0;
};

struct TrainOptions {
  /// The network tolerates a lower detection threshold than MUSIC.
  InputPrep prep{.detect = {.threshold_factor = 4.0}};
  /// Use this partition instead of split(dataset, train_fraction, shuffle_seed).
  std::optional<SplitIndices> split;
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  Checkpoint checkpoint;  ///< weights of the best held-out epoch
  std::vector<EpochStats> history;
  SplitIndices split;
  std::size_t skipped_records = 0;  ///< no echo detected, left out of training
};

/// Single-threaded and bit-reproducible for fixed inputs. `seed` drives weight
/// initialization; config.shuffle_seed drives the split and batch order.
/// Throws empty_dataset or divergence.
TrainResult train(const Dataset& dataset, const NetworkSpec& spec, const TrainConfig& config,
                  const AdamHyper& hyper, std::uint64_t seed, const TrainOptions& options = {});

/// Inference wrapper; estimate() is const and safe to call concurrently.
class NeuralEstimator {
 public:
  explicit NeuralEstimator(const Checkpoint& checkpoint);

  DoaEstimate estimate(const ComplexBaseband& base) const;
  /// Raw tanh output, or nullopt when detection fails.
  std::optional<double> raw_output(const ComplexBaseband& base) const;
  const NetworkSpec& spec() const noexcept { return net_.spec(); }

 private:
  Network<float> net_;
  InputPrep prep_;
};

DoaEstimate predict_doa(const Checkpoint& checkpoint, const ComplexBaseband& base);

}  // namespace echodoa
