#include "echodoa/adam.hpp"

#include <cmath>

#include "echodoa/error.hpp"

namespace echodoa {

void AdamHyper::validate() const {
  require(learning_rate > 0.0 && std::isfinite(learning_rate), ErrorKind::invalid_argument,
          "AdamHyper: learning rate must be > 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::invalid_argument,
          "AdamHyper: betas must lie in [0, 1)");
  require(epsilon > 0.0, ErrorKind::invalid_argument, "AdamHyper: epsilon must be > 0");
}

template <typename Scalar>
AdamState<Scalar> AdamState<Scalar>::zeros_like(const ParameterTensors<Scalar>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.size(), Scalar(0));
    s.second_moment.emplace_back(p.size(), Scalar(0));
  }
  return s;
}

template <typename Scalar>
void adam_step(ParameterTensors<Scalar>& params, const ParameterTensors<Scalar>& grads,
               const AdamHyper& hyper, AdamState<Scalar>& state) {
  hyper.validate();
  require(grads.size() == params.size() && state.first_moment.size() == params.size() &&
              state.second_moment.size() == params.size(),
          ErrorKind::shape_mismatch, "adam_step: tensor count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i)
    require(grads[i].size() == params[i].size() && state.first_moment[i].size() == params[i].size() &&
                state.second_moment[i].size() == params[i].size(),
            ErrorKind::shape_mismatch, "adam_step: tensor size mismatch");

  const std::uint64_t t = state.step + 1;
  const double correction1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(t));
  const auto b1 = static_cast<Scalar>(hyper.beta1);
  const auto b2 = static_cast<Scalar>(hyper.beta2);
  const auto lr = static_cast<Scalar>(hyper.learning_rate);
  const auto eps = static_cast<Scalar>(hyper.epsilon);
  const auto inv_c1 = static_cast<Scalar>(1.0 / correction1);
  const auto inv_c2 = static_cast<Scalar>(1.0 / correction2);

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& w = params[i];
    const auto& g = grads[i];
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (Scalar(1) - b1) * g[k];
      v[k] = b2 * v[k] + (Scalar(1) - b2) * g[k] * g[k];
      const Scalar m_hat = m[k] * inv_c1;
      const Scalar v_hat = v[k] * inv_c2;
      w[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
  state.step = t;
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ParameterTensors<float>&, const ParameterTensors<float>&, const AdamHyper&,
                        AdamState<float>&);
template void adam_step(ParameterTensors<double>&, const ParameterTensors<double>&, const AdamHyper&,
                        AdamState<double>&);

}  // namespace echodoa
