#include "echodoa/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <Eigen/Core>

#include "echodoa/counter_rng.hpp"
#include "echodoa/error.hpp"

namespace echodoa {
namespace {

template <typename Scalar>
using MatRM = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
Scalar activate(Activation act, Scalar z) {
  switch (act) {
    case Activation::identity: return z;
    case Activation::relu: return z > Scalar(0) ? z : Scalar(0);
    case Activation::tanh: {
      // keep the output strictly inside (-1, 1) even where tanh rounds to +-1
      constexpr Scalar bound = Scalar(1) - std::numeric_limits<Scalar>::epsilon();
      return std::clamp(std::tanh(z), -bound, bound);
    }
  }
  return z;
}

// Derivative expressed through the activated value.
template <typename Scalar>
Scalar activation_slope(Activation act, Scalar a) {
  switch (act) {
    case Activation::identity: return Scalar(1);
    case Activation::relu: return a > Scalar(0) ? Scalar(1) : Scalar(0);
    case Activation::tanh: return Scalar(1) - a * a;
  }
  return Scalar(1);
}

// Plain in-order dot product. Eigen's vectorized reductions peel to the
// buffer's alignment, which makes the rounding depend on heap addresses.
template <typename Scalar>
Scalar dot(const Scalar* a, const Scalar* b, std::size_t n) {
  Scalar acc = 0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

struct RowTaps {
  int first = 0;  // first valid kernel row
  int last = 0;   // one past the last valid kernel row
};

RowTaps row_taps(int out_row, int rows, int kernel_rows) {
  const int pad = (kernel_rows - 1) / 2;
  return {std::max(0, pad - out_row), std::min(kernel_rows, rows + pad - out_row)};
}

// col(q, t) = x[ir][c][t + j - pad_t] for q = ((k - first) * maps + c) * kt + j
template <typename Scalar>
void im2col(const Scalar* x, int maps, int len, int out_row, RowTaps taps, int kernel_rows,
            int kernel_time, Scalar* col) {
  const int pad_r = (kernel_rows - 1) / 2;
  const int pad_t = (kernel_time - 1) / 2;
  std::size_t q = 0;
  for (int k = taps.first; k < taps.last; ++k) {
    const int in_row = out_row - pad_r + k;
    for (int c = 0; c < maps; ++c) {
      const Scalar* src = x + (static_cast<std::size_t>(in_row) * maps + c) * len;
      for (int j = 0; j < kernel_time; ++j, ++q) {
        Scalar* dst = col + q * static_cast<std::size_t>(len);
        const int shift = j - pad_t;
        // Taps can reach past both ends when the stage is shorter than the kernel.
        const int t_lo = std::clamp(-shift, 0, len);
        const int t_hi = std::clamp(len - shift, t_lo, len);
        std::fill(dst, dst + t_lo, Scalar(0));
        if (t_hi > t_lo) std::memcpy(dst + t_lo, src + t_lo + shift, sizeof(Scalar) * (t_hi - t_lo));
        std::fill(dst + t_hi, dst + len, Scalar(0));
      }
    }
  }
}

template <typename Scalar>
void col2im_add(const Scalar* col, int maps, int len, int out_row, RowTaps taps, int kernel_rows,
                int kernel_time, Scalar* dx) {
  const int pad_r = (kernel_rows - 1) / 2;
  const int pad_t = (kernel_time - 1) / 2;
  std::size_t q = 0;
  for (int k = taps.first; k < taps.last; ++k) {
    const int in_row = out_row - pad_r + k;
    for (int c = 0; c < maps; ++c) {
      Scalar* dst = dx + (static_cast<std::size_t>(in_row) * maps + c) * len;
      for (int j = 0; j < kernel_time; ++j, ++q) {
        const Scalar* src = col + q * static_cast<std::size_t>(len);
        const int shift = j - pad_t;
        const int t_lo = std::max(0, -shift);
        const int t_hi = std::min(len, len - shift);
        for (int t = t_lo; t < t_hi; ++t) dst[t + shift] += src[t];
      }
    }
  }
}

}  // namespace

std::size_t ParameterShape::size() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

NetworkSpec NetworkSpec::standard(int input_length) {
  NetworkSpec s;
  s.input_length = input_length;
  return s;
}

NetworkSpec NetworkSpec::reduced() {
  NetworkSpec s;
  s.input_length = 64;
  s.feature_maps = 4;
  s.dense_widths = {8, 4};
  return s;
}

NetworkSpec NetworkSpec::linear_toy(int input_rows, int input_length) {
  NetworkSpec s;
  s.input_rows = input_rows;
  s.input_length = input_length;
  s.pools.clear();
  s.dense_widths.clear();
  s.hidden_activation = Activation::identity;
  s.output_activation = Activation::identity;
  return s;
}

void NetworkSpec::validate() const {
  require(input_rows >= 1 && input_length >= 1, ErrorKind::invalid_argument,
          "NetworkSpec: input dimensions must be positive");
  require(feature_maps >= 1 && kernel_rows >= 1 && kernel_time >= 1, ErrorKind::invalid_argument,
          "NetworkSpec: conv dimensions must be positive");
  int rows = input_rows, len = input_length;
  for (std::size_t s = 0; s < pools.size(); ++s) {
    const auto& p = pools[s];
    require(p.rows >= 1 && p.time >= 1, ErrorKind::invalid_argument,
            "NetworkSpec: pool sizes must be positive");
    require(rows % p.rows == 0 && len % p.time == 0, ErrorKind::invalid_argument,
            "NetworkSpec: pooling schedule does not divide stage " + std::to_string(s + 1) +
                " (" + std::to_string(rows) + " x " + std::to_string(len) + ")");
    rows /= p.rows;
    len /= p.time;
  }
  for (int w : dense_widths)
    require(w >= 1, ErrorKind::invalid_argument, "NetworkSpec: dense widths must be positive");
}

std::size_t NetworkSpec::input_size() const {
  return static_cast<std::size_t>(input_rows) * static_cast<std::size_t>(input_length);
}

int NetworkSpec::rows_at(std::size_t s) const {
  int rows = input_rows;
  for (std::size_t i = 0; i < s && i < pools.size(); ++i) rows /= pools[i].rows;
  return rows;
}

int NetworkSpec::length_at(std::size_t s) const {
  int len = input_length;
  for (std::size_t i = 0; i < s && i < pools.size(); ++i) len /= pools[i].time;
  return len;
}

std::size_t NetworkSpec::flattened_size() const {
  const std::size_t maps = pools.empty() ? 1 : static_cast<std::size_t>(feature_maps);
  return static_cast<std::size_t>(rows_at(pools.size())) * maps *
         static_cast<std::size_t>(length_at(pools.size()));
}

std::vector<ParameterShape> NetworkSpec::parameter_shapes() const {
  std::vector<ParameterShape> out;
  const auto f = static_cast<std::size_t>(feature_maps);
  for (std::size_t s = 0; s < pools.size(); ++s) {
    const std::size_t in_maps = s == 0 ? 1 : f;
    const std::string prefix = "conv" + std::to_string(s + 1);
    out.push_back({prefix + ".weight",
                   {f, static_cast<std::size_t>(kernel_rows), in_maps, static_cast<std::size_t>(kernel_time)}});
    out.push_back({prefix + ".bias", {f}});
  }
  std::size_t in = flattened_size();
  for (std::size_t j = 0; j < dense_widths.size(); ++j) {
    const auto w = static_cast<std::size_t>(dense_widths[j]);
    const std::string prefix = "dense" + std::to_string(j + 1);
    out.push_back({prefix + ".weight", {w, in}});
    out.push_back({prefix + ".bias", {w}});
    in = w;
  }
  out.push_back({"output.weight", {1, in}});
  out.push_back({"output.bias", {1}});
  return out;
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameter_shapes()) n += p.size();
  return n;
}

template <typename Scalar>
std::uint64_t Workspace<Scalar>::activation_signature(Activation hidden) const {
  std::uint64_t h = 0x5eed;
  auto fold_bits = [&h](const AlignedVector<Scalar>& v) {
    std::uint64_t word = 0;
    std::size_t bit = 0;
    for (const Scalar x : v) {
      word = (word << 1) | (x > Scalar(0) ? 1u : 0u);
      if (++bit == 64) {
        h = hash_key(h, word);
        word = 0;
        bit = 0;
      }
    }
    h = hash_key(h, word, bit);
  };
  for (const auto& st : stages) {
    if (hidden == Activation::relu) fold_bits(st.activated);
    for (auto idx : st.argmax) h = hash_key(h, idx);
  }
  if (hidden == Activation::relu)
    for (std::size_t j = 1; j < dense_in.size(); ++j) fold_bits(dense_in[j]);
  return h;
}

template <typename Scalar>
Tensor<Scalar>::Tensor(std::vector<std::size_t> dims, std::vector<Scalar> values)
    : shape(std::move(dims)), data(std::move(values)) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  require(n == data.size(), ErrorKind::shape_mismatch, "Tensor: element count does not match shape");
}

template <typename Scalar>
Network<Scalar>::Network(NetworkSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  for (const auto& shape : spec_.parameter_shapes()) params_.emplace_back(shape.size(), Scalar(0));
}

template <typename Scalar>
Network<Scalar> Network<Scalar>::initialized(NetworkSpec spec, std::uint64_t seed) {
  Network net(std::move(spec));
  const auto shapes = net.spec_.parameter_shapes();
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& dims = shapes[i].dims;
    if (dims.size() == 1) continue;  // biases start at zero
    std::size_t fan_in = 1;
    for (std::size_t d = 1; d < dims.size(); ++d) fan_in *= dims[d];
    const bool feeds_relu = (i + 2 < shapes.size()) && net.spec_.hidden_activation == Activation::relu;
    const double limit = std::sqrt((feeds_relu ? 6.0 : 3.0) / static_cast<double>(fan_in));
    auto& values = net.params_[i];
    for (std::size_t k = 0; k < values.size(); ++k)
      values[k] = static_cast<Scalar>((2.0 * to_unit(hash_key(seed, i, k)) - 1.0) * limit);
  }
  return net;
}

template <typename Scalar>
void Network<Scalar>::set_parameters(ParameterTensors<Scalar> params) {
  const auto shapes = spec_.parameter_shapes();
  require(params.size() == shapes.size(), ErrorKind::shape_mismatch,
          "Network: parameter tensor count does not match the spec");
  for (std::size_t i = 0; i < shapes.size(); ++i)
    require(params[i].size() == shapes[i].size(), ErrorKind::shape_mismatch,
            "Network: parameter '" + shapes[i].name + "' has the wrong size");
  params_ = std::move(params);
}

template <typename Scalar>
ParameterTensors<Scalar> Network<Scalar>::zero_gradients() const {
  ParameterTensors<Scalar> g;
  g.reserve(params_.size());
  for (const auto& p : params_) g.emplace_back(p.size(), Scalar(0));
  return g;
}

template <typename Scalar>
void Network<Scalar>::check_input(std::span<const Scalar> input) const {
  require(input.size() == spec_.input_size(), ErrorKind::shape_mismatch,
          "Network: input has " + std::to_string(input.size()) + " values, expected " +
              std::to_string(spec_.input_size()));
}

template <typename Scalar>
Scalar Network<Scalar>::predict(std::span<const Scalar> input) const {
  Workspace<Scalar> ws;
  return forward(input, ws);
}

template <typename Scalar>
std::vector<Scalar> Network<Scalar>::forward(const Tensor<Scalar>& batch) const {
  require(batch.shape.size() == 3 && batch.shape[1] == static_cast<std::size_t>(spec_.input_rows) &&
              batch.shape[2] == static_cast<std::size_t>(spec_.input_length),
          ErrorKind::shape_mismatch, "Network::forward: expected shape {batch, rows, time}");
  const std::size_t per = spec_.input_size();
  std::vector<Scalar> out(batch.shape[0]);
  Workspace<Scalar> ws;
  for (std::size_t b = 0; b < out.size(); ++b)
    out[b] = forward(std::span<const Scalar>(batch.data.data() + b * per, per), ws);
  return out;
}

template <typename Scalar>
LossAndGradients<Scalar> Network<Scalar>::backward(const Tensor<Scalar>& batch,
                                                   std::span<const Scalar> labels) const {
  require(batch.shape.size() == 3 && batch.shape[1] == static_cast<std::size_t>(spec_.input_rows) &&
              batch.shape[2] == static_cast<std::size_t>(spec_.input_length),
          ErrorKind::shape_mismatch, "Network::backward: expected shape {batch, rows, time}");
  const std::size_t count = batch.shape[0];
  require(labels.size() == count && count > 0, ErrorKind::shape_mismatch,
          "Network::backward: need one label per record");
  const std::size_t per = spec_.input_size();
  LossAndGradients<Scalar> out;
  out.gradients = zero_gradients();
  out.predictions.resize(count);
  Workspace<Scalar> ws;
  Scalar loss = 0;
  for (std::size_t b = 0; b < count; ++b) {
    const Scalar y = forward(std::span<const Scalar>(batch.data.data() + b * per, per), ws);
    out.predictions[b] = y;
    const Scalar residual = y - labels[b];
    loss += residual * residual;
    backward_from(Scalar(2) * residual / static_cast<Scalar>(count), ws, out.gradients);
  }
  out.loss = loss / static_cast<Scalar>(count);
  return out;
}

template <typename Scalar>
Scalar Network<Scalar>::forward(std::span<const Scalar> input, Workspace<Scalar>& ws) const {
  check_input(input);
  const std::size_t n_stages = spec_.conv_stages();
  const int maps = spec_.feature_maps;
  const int kr = spec_.kernel_rows;
  const int kt = spec_.kernel_time;
  ws.stages.resize(n_stages);
  ws.dense_in.resize(spec_.dense_widths.size() + 1);

  AlignedVector<Scalar>& first_input = n_stages > 0 ? ws.stages[0].input : ws.dense_in[0];
  first_input.assign(input.begin(), input.end());

  for (std::size_t s = 0; s < n_stages; ++s) {
    auto& st = ws.stages[s];
    const int in_maps = s == 0 ? 1 : maps;
    const int rows = spec_.rows_at(s);
    const int len = spec_.length_at(s);
    const auto wide = static_cast<Eigen::Index>(kr * in_maps * kt);
    Eigen::Map<const MatRM<Scalar>> weight(params_[2 * s].data(), maps, wide);
    Eigen::Map<const Vec<Scalar>> bias(params_[2 * s + 1].data(), maps);

    st.activated.resize(static_cast<std::size_t>(rows) * maps * len);
    ws.col.resize(static_cast<std::size_t>(wide) * len);
    for (int r = 0; r < rows; ++r) {
      const RowTaps taps = row_taps(r, rows, kr);
      const auto depth = static_cast<Eigen::Index>((taps.last - taps.first) * in_maps * kt);
      Eigen::Map<MatRM<Scalar>> out(st.activated.data() + static_cast<std::size_t>(r) * maps * len, maps, len);
      if (depth == 0) {
        out.colwise() = bias;
      } else {
        im2col(st.input.data(), in_maps, len, r, taps, kr, kt, ws.col.data());
        Eigen::Map<const MatRM<Scalar>> col(ws.col.data(), depth, len);
        out.noalias() = weight.middleCols(taps.first * in_maps * kt, depth) * col;
        out.colwise() += bias;
      }
    }
    for (auto& v : st.activated) v = activate(spec_.hidden_activation, v);

    // max-pool into the next stage's input (or the flattened dense input)
    const auto pool = spec_.pools[s];
    const int out_rows = rows / pool.rows;
    const int out_len = len / pool.time;
    AlignedVector<Scalar>& pooled = (s + 1 < n_stages) ? ws.stages[s + 1].input : ws.dense_in[0];
    pooled.resize(static_cast<std::size_t>(out_rows) * maps * out_len);
    st.argmax.resize(pooled.size());
    std::size_t o = 0;
    for (int r = 0; r < out_rows; ++r) {
      for (int c = 0; c < maps; ++c) {
        for (int t = 0; t < out_len; ++t, ++o) {
          std::size_t best_idx = (static_cast<std::size_t>(r * pool.rows) * maps + c) * len +
                                 static_cast<std::size_t>(t * pool.time);
          Scalar best = st.activated[best_idx];
          for (int dr = 0; dr < pool.rows; ++dr) {
            for (int dt = 0; dt < pool.time; ++dt) {
              const std::size_t idx =
                  (static_cast<std::size_t>(r * pool.rows + dr) * maps + c) * len +
                  static_cast<std::size_t>(t * pool.time + dt);
              if (st.activated[idx] > best) {
                best = st.activated[idx];
                best_idx = idx;
              }
            }
          }
          pooled[o] = best;
          st.argmax[o] = static_cast<std::uint32_t>(best_idx);
        }
      }
    }
  }

  std::size_t in = spec_.flattened_size();
  for (std::size_t j = 0; j < spec_.dense_widths.size(); ++j) {
    const auto width = static_cast<std::size_t>(spec_.dense_widths[j]);
    const std::size_t p = 2 * n_stages + 2 * j;
    auto& next = ws.dense_in[j + 1];
    next.resize(width);
    for (std::size_t i = 0; i < width; ++i)
      next[i] = activate(spec_.hidden_activation,
                         params_[p + 1][i] + dot(params_[p].data() + i * in, ws.dense_in[j].data(), in));
    in = width;
  }

  const std::size_t p = params_.size() - 2;
  ws.output = activate(spec_.output_activation, dot(params_[p].data(), ws.dense_in.back().data(), in) + params_[p + 1][0]);
  return ws.output;
}

template <typename Scalar>
void Network<Scalar>::backward_from(Scalar dloss_doutput, Workspace<Scalar>& ws,
                                    ParameterTensors<Scalar>& grads) const {
  require(grads.size() == params_.size(), ErrorKind::shape_mismatch,
          "Network::backward_from: gradient container does not match the parameters");
  const std::size_t n_stages = spec_.conv_stages();
  const std::size_t n_dense = spec_.dense_widths.size();
  const int maps = spec_.feature_maps;
  const int kr = spec_.kernel_rows;
  const int kt = spec_.kernel_time;

  // output unit
  const Scalar dz_out = dloss_doutput * activation_slope(spec_.output_activation, ws.output);
  {
    const std::size_t p = params_.size() - 2;
    const auto& x = ws.dense_in.back();
    auto& gw = grads[p];
    for (std::size_t i = 0; i < x.size(); ++i) gw[i] += dz_out * x[i];
    grads[p + 1][0] += dz_out;
    ws.grad_a.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) ws.grad_a[i] = dz_out * params_[p][i];
  }

  // dense layers, last to first; ws.grad_a holds d/d(dense_in[j + 1])
  for (std::size_t jj = n_dense; jj-- > 0;) {
    const std::size_t p = 2 * n_stages + 2 * jj;
    const auto width = static_cast<Eigen::Index>(spec_.dense_widths[jj]);
    const auto in = static_cast<Eigen::Index>(ws.dense_in[jj].size());
    const auto& a = ws.dense_in[jj + 1];
    for (Eigen::Index i = 0; i < width; ++i)
      ws.grad_a[static_cast<std::size_t>(i)] *= activation_slope(spec_.hidden_activation, a[static_cast<std::size_t>(i)]);
    const Scalar* x = ws.dense_in[jj].data();
    const Scalar* w = params_[p].data();
    Scalar* gw = grads[p].data();
    ws.grad_b.assign(static_cast<std::size_t>(in), Scalar(0));
    for (Eigen::Index i = 0; i < width; ++i) {
      const Scalar dz = ws.grad_a[static_cast<std::size_t>(i)];
      grads[p + 1][static_cast<std::size_t>(i)] += dz;
      Scalar* gw_row = gw + i * in;
      const Scalar* w_row = w + i * in;
      for (Eigen::Index k = 0; k < in; ++k) {
        gw_row[k] += dz * x[k];
        ws.grad_b[static_cast<std::size_t>(k)] += w_row[k] * dz;
      }
    }
    std::swap(ws.grad_a, ws.grad_b);
  }

  // conv stages, last to first; ws.grad_a holds d/d(pooled output of stage s)
  AlignedVector<Scalar> dact;
  AlignedVector<Scalar> dcol;
  for (std::size_t s = n_stages; s-- > 0;) {
    auto& st = ws.stages[s];
    const int in_maps = s == 0 ? 1 : maps;
    const int rows = spec_.rows_at(s);
    const int len = spec_.length_at(s);
    const auto wide = static_cast<Eigen::Index>(kr * in_maps * kt);

    dact.assign(st.activated.size(), Scalar(0));
    for (std::size_t o = 0; o < st.argmax.size(); ++o) dact[st.argmax[o]] += ws.grad_a[o];
    for (std::size_t i = 0; i < dact.size(); ++i)
      dact[i] *= activation_slope(spec_.hidden_activation, st.activated[i]);

    Eigen::Map<const MatRM<Scalar>> weight(params_[2 * s].data(), maps, wide);
    Eigen::Map<MatRM<Scalar>> gw(grads[2 * s].data(), maps, wide);
    Eigen::Map<Vec<Scalar>> gb(grads[2 * s + 1].data(), maps);
    const bool need_input_grad = s > 0;
    if (need_input_grad) ws.grad_b.assign(st.input.size(), Scalar(0));
    ws.col.resize(static_cast<std::size_t>(wide) * len);
    if (need_input_grad) dcol.resize(ws.col.size());

    for (int r = 0; r < rows; ++r) {
      const RowTaps taps = row_taps(r, rows, kr);
      const auto depth = static_cast<Eigen::Index>((taps.last - taps.first) * in_maps * kt);
      Eigen::Map<const MatRM<Scalar>> dz(dact.data() + static_cast<std::size_t>(r) * maps * len, maps, len);
      gb += dz.rowwise().sum();
      if (depth == 0) continue;
      im2col(st.input.data(), in_maps, len, r, taps, kr, kt, ws.col.data());
      Eigen::Map<const MatRM<Scalar>> col(ws.col.data(), depth, len);
      const Eigen::Index offset = taps.first * in_maps * kt;
      gw.middleCols(offset, depth).noalias() += dz * col.transpose();
      if (need_input_grad) {
        Eigen::Map<MatRM<Scalar>> dc(dcol.data(), depth, len);
        dc.noalias() = weight.middleCols(offset, depth).transpose() * dz;
        col2im_add(dcol.data(), in_maps, len, r, taps, kr, kt, ws.grad_b.data());
      }
    }
    if (need_input_grad) std::swap(ws.grad_a, ws.grad_b);
  }
}

template struct Workspace<float>;
template struct Workspace<double>;
template struct Tensor<float>;
template struct Tensor<double>;
template class Network<float>;
template class Network<double>;

}  // namespace echodoa
