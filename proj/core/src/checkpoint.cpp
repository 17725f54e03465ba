#include "echodoa/checkpoint.hpp"

#include <iomanip>
#include <ostream>

#include "echodoa/binary_io.hpp"
#include "echodoa/error.hpp"

namespace echodoa {

template <typename Scalar>
Checkpoint Checkpoint::from_network(const Network<Scalar>& net, InputPrep prep, TrainingMetadata meta) {
  Checkpoint c;
  c.spec = net.spec();
  c.prep = prep;
  c.meta = meta;
  for (const auto& tensor : net.parameters()) c.weights.emplace_back(tensor.begin(), tensor.end());
  return c;
}

template <typename Scalar>
Network<Scalar> Checkpoint::network() const {
  Network<Scalar> net(spec);
  ParameterTensors<Scalar> params;
  params.reserve(weights.size());
  for (const auto& tensor : weights) {
    AlignedVector<Scalar> converted(tensor.size());
    for (std::size_t i = 0; i < tensor.size(); ++i) converted[i] = static_cast<Scalar>(tensor[i]);
    params.push_back(std::move(converted));
  }
  try {
    net.set_parameters(std::move(params));
  } catch (const Error& e) {
    fail(ErrorKind::incompatible_checkpoint, e.what());
  }
  return net;
}

template Checkpoint Checkpoint::from_network(const Network<float>&, InputPrep, TrainingMetadata);
template Checkpoint Checkpoint::from_network(const Network<double>&, InputPrep, TrainingMetadata);
template Network<float> Checkpoint::network<float>() const;
template Network<double> Checkpoint::network<double>() const;

std::vector<std::uint8_t> checkpoint_to_bytes(const Checkpoint& c) {
  const auto shapes = c.spec.parameter_shapes();
  require(c.weights.size() == shapes.size(), ErrorKind::shape_mismatch,
          "checkpoint: weight tensors do not match the spec");
  ByteWriter w;
  w.tag(std::string_view(kCheckpointMagic, 4));
  w.u8(kCheckpointVersion);

  const auto& s = c.spec;
  w.u32(static_cast<std::uint32_t>(s.input_rows));
  w.u32(static_cast<std::uint32_t>(s.input_length));
  w.u32(static_cast<std::uint32_t>(s.feature_maps));
  w.u32(static_cast<std::uint32_t>(s.kernel_rows));
  w.u32(static_cast<std::uint32_t>(s.kernel_time));
  w.u32(static_cast<std::uint32_t>(s.pools.size()));
  for (const auto& p : s.pools) {
    w.u32(static_cast<std::uint32_t>(p.rows));
    w.u32(static_cast<std::uint32_t>(p.time));
  }
  w.u32(static_cast<std::uint32_t>(s.dense_widths.size()));
  for (int width : s.dense_widths) w.u32(static_cast<std::uint32_t>(width));
  w.u8(static_cast<std::uint8_t>(s.hidden_activation));
  w.u8(static_cast<std::uint8_t>(s.output_activation));

  w.u8(static_cast<std::uint8_t>(c.prep.normalization));
  w.f64(c.prep.detect.threshold_factor);
  w.f64(c.prep.detect.noise_segment);
  w.f64(c.prep.detect.floor_fraction);

  w.u64(c.meta.seed);
  w.u32(c.meta.epochs_run);
  w.u32(c.meta.best_epoch);
  w.f64(c.meta.best_heldout_loss);
  w.f64(c.meta.final_train_loss);

  std::uint64_t total = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    require(c.weights[i].size() == shapes[i].size(), ErrorKind::shape_mismatch,
            "checkpoint: tensor '" + shapes[i].name + "' has the wrong size");
    total += c.weights[i].size();
  }
  w.u64(total);
  for (const auto& tensor : c.weights)
    for (double v : tensor) w.f64(v);
  w.finish_with_crc();
  return w.take();
}

Checkpoint checkpoint_from_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader header(bytes);
  header.expect_tag(std::string_view(kCheckpointMagic, 4));
  const std::uint8_t version = header.u8();
  require(version == kCheckpointVersion, ErrorKind::version_mismatch,
          "checkpoint version " + std::to_string(version) + " is not supported");
  ByteReader r(verified_body(bytes));
  r.bytes(5);

  Checkpoint c;
  auto& s = c.spec;
  s.input_rows = static_cast<int>(r.u32());
  s.input_length = static_cast<int>(r.u32());
  s.feature_maps = static_cast<int>(r.u32());
  s.kernel_rows = static_cast<int>(r.u32());
  s.kernel_time = static_cast<int>(r.u32());
  const std::uint32_t n_pools = r.u32();
  require(n_pools <= 64, ErrorKind::incompatible_checkpoint, "checkpoint: implausible stage count");
  s.pools.resize(n_pools);
  for (auto& p : s.pools) {
    p.rows = static_cast<int>(r.u32());
    p.time = static_cast<int>(r.u32());
  }
  const std::uint32_t n_dense = r.u32();
  require(n_dense <= 64, ErrorKind::incompatible_checkpoint, "checkpoint: implausible dense layer count");
  s.dense_widths.resize(n_dense);
  for (auto& width : s.dense_widths) width = static_cast<int>(r.u32());
  const std::uint8_t hidden = r.u8();
  const std::uint8_t output = r.u8();
  require(hidden <= 2 && output <= 2, ErrorKind::incompatible_checkpoint, "checkpoint: unknown activation");
  s.hidden_activation = static_cast<Activation>(hidden);
  s.output_activation = static_cast<Activation>(output);
  try {
    s.validate();
  } catch (const Error& e) {
    fail(ErrorKind::incompatible_checkpoint, e.what());
  }

  const std::uint8_t norm = r.u8();
  require(norm == static_cast<std::uint8_t>(NormalizationRule::window_rms) ||
              norm == static_cast<std::uint8_t>(NormalizationRule::window_rms_phase),
          ErrorKind::incompatible_checkpoint,
          "checkpoint: unknown normalization rule " + std::to_string(norm));
  c.prep.normalization = static_cast<NormalizationRule>(norm);
  c.prep.detect.threshold_factor = r.f64();
  c.prep.detect.noise_segment = r.f64();
  c.prep.detect.floor_fraction = r.f64();

  c.meta.seed = r.u64();
  c.meta.epochs_run = r.u32();
  c.meta.best_epoch = r.u32();
  c.meta.best_heldout_loss = r.f64();
  c.meta.final_train_loss = r.f64();

  const auto shapes = s.parameter_shapes();
  const std::uint64_t total = r.u64();
  std::uint64_t expected = 0;
  for (const auto& shape : shapes) expected += shape.size();
  require(total == expected, ErrorKind::incompatible_checkpoint,
          "checkpoint: parameter count does not match its architecture");
  require(r.remaining() == total * 8, ErrorKind::truncated, "checkpoint: weight block has the wrong length");
  for (const auto& shape : shapes) {
    AlignedVector<double> tensor(shape.size());
    for (auto& v : tensor) v = r.f64();
    c.weights.push_back(std::move(tensor));
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_bytes(path, checkpoint_to_bytes(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(read_file_bytes(path));
}

void export_checkpoint_text(const Checkpoint& checkpoint, std::ostream& out) {
  const auto shapes = checkpoint.spec.parameter_shapes();
  out << "# echodoa checkpoint v" << int{kCheckpointVersion} << ", " << shapes.size() << " tensors\n"
      << std::setprecision(17);
  for (std::size_t i = 0; i < shapes.size() && i < checkpoint.weights.size(); ++i) {
    out << "# " << shapes[i].name;
    for (auto d : shapes[i].dims) out << ' ' << d;
    out << '\n';
    for (double v : checkpoint.weights[i]) out << v << '\n';
  }
}

}  // namespace echodoa
