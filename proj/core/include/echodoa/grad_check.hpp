#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "echodoa/network.hpp"

namespace echodoa {

struct GradCheckOptions {
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  /// Probed parameters in total; every tensor gets at least one probe.
  std::size_t probes = 200;
  std::size_t batch = 2;
  /// Gradients below this magnitude (both analytic and numeric) are not compared.
  double magnitude_floor = 1e-8;
  /// Negative control: multiply the analytic gradient of this tensor by corrupt_scale.
  std::optional<std::size_t> corrupt_tensor;
  double corrupt_scale = 2.0;

  void validate() const;
};

struct TensorCheck {
  std::string name;
  std::size_t probed = 0;
  double max_relative_error = 0.0;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t compared = 0;
  std::size_t below_floor = 0;
  /// Probes redrawn because the perturbation flipped a ReLU or pooling choice.
  std::size_t kinks_resampled = 0;
  std::vector<TensorCheck> tensors;
  bool passed = false;
};

/// Central differences in double precision on a seed-initialized network with
/// random biases, random inputs and random labels.
GradCheckReport grad_check(const NetworkSpec& spec, std::uint64_t seed, const GradCheckOptions& options = {});

}  // namespace echodoa
