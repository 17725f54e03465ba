#pragma once

#include <cstdint>

#include "echodoa/network.hpp"

namespace echodoa {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

template <typename Scalar>
struct AdamState {
  ParameterTensors<Scalar> first_moment;
  ParameterTensors<Scalar> second_moment;
  std::uint64_t step = 0;

  static AdamState zeros_like(const ParameterTensors<Scalar>& params);
};

/// One bias-corrected ADAM update; increments state.step.
template <typename Scalar>
void adam_step(ParameterTensors<Scalar>& params, const ParameterTensors<Scalar>& grads,
               const AdamHyper& hyper, AdamState<Scalar>& state);

}  // namespace echodoa
