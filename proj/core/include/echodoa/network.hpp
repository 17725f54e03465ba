#pragma once

// Convolutional DoA regressor: conv stages (kernel rows x kernel time,
// same-padding, ReLU, max-pool), dense ReLU layers, one tanh output unit.
// Forward and exact reverse-mode backward are written out by hand; the
// convolutions run as im2col + GEMM.

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace echodoa {

enum class Activation : std::uint8_t { identity = 0, relu = 1, tanh = 2 };

struct PoolShape {
  int rows = 1;
  int time = 1;
  friend bool operator==(const PoolShape&, const PoolShape&) = default;
};

struct ParameterShape {
  std::string name;
  std::vector<std::size_t> dims;
  std::size_t size() const;
};

struct NetworkSpec {
  int input_rows = 4;      ///< 2 * sensors: (re, im) per channel
  int input_length = 512;  ///< baseband samples per record
  int feature_maps = 64;
  int kernel_rows = 4;
  int kernel_time = 16;
  /// One entry per conv stage.
  std::vector<PoolShape> pools{{2, 2}, {2, 2}, {1, 2}, {1, 2}, {1, 2}};
  std::vector<int> dense_widths{128, 32};
  Activation hidden_activation = Activation::relu;
  Activation output_activation = Activation::tanh;

  /// Five 64-map stages with 16x4 kernels, dense 128/32, tanh output.
  static NetworkSpec standard(int input_length = 512);
  /// Small variant for gradient checks: T = 64, 4 maps, dense 8/4.
  static NetworkSpec reduced();
  /// No conv stages, no hidden layer, identity output: y = w.x + b.
  static NetworkSpec linear_toy(int input_rows = 4, int input_length = 16);

  void validate() const;
  std::size_t conv_stages() const noexcept { return pools.size(); }
  std::size_t input_size() const;
  /// Rows / length entering conv stage `s` (s == conv_stages() gives the final map).
  int rows_at(std::size_t s) const;
  int length_at(std::size_t s) const;
  std::size_t flattened_size() const;
  std::vector<ParameterShape> parameter_shapes() const;
  std::size_t parameter_count() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// 64-byte aligned storage. Vectorized kernels peel loops to the buffer's
/// alignment, so without it rounding would depend on where the heap put things.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t alignment{64};

  AlignedAllocator() noexcept = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }

  template <typename U>
  friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
    return true;
  }
};

template <typename Scalar>
using AlignedVector = std::vector<Scalar, AlignedAllocator<Scalar>>;

template <typename Scalar>
using ParameterTensors = std::vector<AlignedVector<Scalar>>;

/// Per-call scratch and forward caches. One per thread.
template <typename Scalar>
struct Workspace {
  struct Stage {
    AlignedVector<Scalar> input;      // [rows][in_maps][len]
    AlignedVector<Scalar> activated;  // [rows][maps][len]
    std::vector<std::uint32_t> argmax;  // per pooled output, index into activated
  };
  std::vector<Stage> stages;
  std::vector<AlignedVector<Scalar>> dense_in;  // input to dense layer j (j = last: output unit)
  AlignedVector<Scalar> col;
  AlignedVector<Scalar> grad_a;
  AlignedVector<Scalar> grad_b;
  Scalar output = 0;

  /// Hash of every ReLU on/off decision and pooling choice from the last forward.
  std::uint64_t activation_signature(Activation hidden) const;
};

template <typename Scalar>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<Scalar> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> dims, std::vector<Scalar> values);
  std::size_t size() const noexcept { return data.size(); }
};

template <typename Scalar>
struct LossAndGradients {
  Scalar loss = 0;
  std::vector<Scalar> predictions;
  ParameterTensors<Scalar> gradients;
};

template <typename Scalar>
class Network {
 public:
  /// All parameters zero.
  explicit Network(NetworkSpec spec);
  /// Fan-in scaled uniform weights, zero biases; a pure function of the seed.
  static Network initialized(NetworkSpec spec, std::uint64_t seed);

  const NetworkSpec& spec() const noexcept { return spec_; }
  ParameterTensors<Scalar>& parameters() noexcept { return params_; }
  const ParameterTensors<Scalar>& parameters() const noexcept { return params_; }
  void set_parameters(ParameterTensors<Scalar> params);
  ParameterTensors<Scalar> zero_gradients() const;

  /// Output for one record laid out [rows][time].
  Scalar predict(std::span<const Scalar> input) const;
  /// Batch input shape {batch, rows, time}; returns one value per record.
  std::vector<Scalar> forward(const Tensor<Scalar>& batch) const;
  /// Mean squared error over the batch and its exact gradient.
  LossAndGradients<Scalar> backward(const Tensor<Scalar>& batch, std::span<const Scalar> labels) const;

  /// Forward pass that keeps everything backward_from needs in `ws`.
  Scalar forward(std::span<const Scalar> input, Workspace<Scalar>& ws) const;
  /// Adds d(loss)/d(params) to `grads`, given d(loss)/d(output) for the record
  /// whose forward pass is cached in `ws`.
  void backward_from(Scalar dloss_doutput, Workspace<Scalar>& ws,
                     ParameterTensors<Scalar>& grads) const;

 private:
  void check_input(std::span<const Scalar> input) const;

  NetworkSpec spec_;
  ParameterTensors<Scalar> params_;
};

extern template class Network<float>;
extern template class Network<double>;

}  // namespace echodoa
