#include "echodoa/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "echodoa/counter_rng.hpp"
#include "echodoa/error.hpp"

namespace echodoa {

void GradCheckOptions::validate() const {
  require(epsilon >= 1e-6 && epsilon <= 1e-4, ErrorKind::invalid_argument,
          "grad_check: epsilon must lie in [1e-6, 1e-4]");
  require(tolerance > 0.0, ErrorKind::invalid_argument, "grad_check: tolerance must be > 0");
  require(batch >= 1, ErrorKind::invalid_argument, "grad_check: batch must be >= 1");
}

namespace {

struct Probe {
  double loss = 0.0;
  std::vector<std::uint64_t> signatures;
};

Probe evaluate(const Network<double>& net, const std::vector<std::vector<double>>& inputs,
               const std::vector<double>& labels, Workspace<double>& ws) {
  Probe p;
  for (std::size_t b = 0; b < inputs.size(); ++b) {
    const double r = net.forward(inputs[b], ws) - labels[b];
    p.loss += r * r;
    p.signatures.push_back(ws.activation_signature(net.spec().hidden_activation));
  }
  p.loss /= static_cast<double>(inputs.size());
  return p;
}

// Probe counts per tensor: an even share capped at the tensor size, the
// remainder handed round-robin to tensors that still have room.
std::vector<std::size_t> allocate(const std::vector<ParameterShape>& shapes, std::size_t total) {
  std::vector<std::size_t> count(shapes.size(), 0);
  const std::size_t share = std::max<std::size_t>(1, (total + shapes.size() - 1) / shapes.size());
  std::size_t used = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    count[i] = std::min(share, shapes[i].size());
    used += count[i];
  }
  for (bool progress = true; used < total && progress;) {
    progress = false;
    for (std::size_t i = 0; i < shapes.size() && used < total; ++i)
      if (count[i] < shapes[i].size()) {
        ++count[i];
        ++used;
        progress = true;
      }
  }
  return count;
}

}  // namespace

GradCheckReport grad_check(const NetworkSpec& spec, std::uint64_t seed, const GradCheckOptions& options) {
  options.validate();
  auto net = Network<double>::initialized(spec, seed);
  const auto shapes = spec.parameter_shapes();

  // Nonzero biases so their gradients are generic.
  SplitMix64 rng(hash_key(seed, 0x67726164ULL));
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (shapes[i].dims.size() == 1)
      for (auto& b : net.parameters()[i]) b = rng.uniform(-0.1, 0.1);

  std::vector<std::vector<double>> inputs(options.batch, std::vector<double>(spec.input_size()));
  std::vector<double> labels(options.batch);
  for (std::size_t b = 0; b < options.batch; ++b) {
    for (std::size_t k = 0; k < inputs[b].size(); ++k) inputs[b][k] = normal_at(hash_key(seed, 0x696eULL, b, k));
    labels[b] = rng.uniform(-0.9, 0.9);
  }

  Workspace<double> ws;
  auto analytic = net.zero_gradients();
  const Probe base = evaluate(net, inputs, labels, ws);
  for (std::size_t b = 0; b < options.batch; ++b) {
    const double r = net.forward(inputs[b], ws) - labels[b];
    net.backward_from(2.0 * r / static_cast<double>(options.batch), ws, analytic);
  }
  if (options.corrupt_tensor) {
    require(*options.corrupt_tensor < analytic.size(), ErrorKind::invalid_argument,
            "grad_check: corrupt tensor index out of range");
    for (auto& g : analytic[*options.corrupt_tensor]) g *= options.corrupt_scale;
  }

  GradCheckReport report;
  const auto counts = allocate(shapes, options.probes);
  const double eps = options.epsilon;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    TensorCheck tc{shapes[i].name, 0, 0.0};
    const std::size_t n = shapes[i].size();
    // Candidate order: a seeded permutation, so probes never repeat and kinks
    // are replaced by the next candidate.
    std::vector<std::size_t> candidates(n);
    for (std::size_t k = 0; k < n; ++k) candidates[k] = k;
    SplitMix64 pick(hash_key(seed, 0x70726f62ULL, i));
    for (std::size_t k = n; k > 1; --k) std::swap(candidates[k - 1], candidates[pick.below(k)]);

    auto& w = net.parameters()[i];
    for (std::size_t c = 0; c < n && tc.probed < counts[i]; ++c) {
      const std::size_t k = candidates[c];
      const double saved = w[k];
      w[k] = saved + eps;
      const Probe plus = evaluate(net, inputs, labels, ws);
      w[k] = saved - eps;
      const Probe minus = evaluate(net, inputs, labels, ws);
      w[k] = saved;
      if (plus.signatures != base.signatures || minus.signatures != base.signatures) {
        ++report.kinks_resampled;
        continue;
      }
      ++tc.probed;
      const double numeric = (plus.loss - minus.loss) / (2.0 * eps);
      const double a = analytic[i][k];
      const double scale = std::max(std::abs(a), std::abs(numeric));
      if (scale <= options.magnitude_floor) {
        ++report.below_floor;
        continue;
      }
      const double rel = std::abs(a - numeric) / scale;
      tc.max_relative_error = std::max(tc.max_relative_error, rel);
      ++report.compared;
    }
    report.max_relative_error = std::max(report.max_relative_error, tc.max_relative_error);
    report.tensors.push_back(std::move(tc));
  }
  report.passed = report.compared > 0 && report.max_relative_error < options.tolerance;
  return report;
}

}  // namespace echodoa
