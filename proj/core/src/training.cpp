#include "echodoa/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "echodoa/counter_rng.hpp"
#include "echodoa/error.hpp"

namespace echodoa {

void TrainConfig::validate() const {
  require(epochs >= 1, ErrorKind::invalid_argument, "TrainConfig: epochs must be >= 1");
  require(batch_size >= 1, ErrorKind::invalid_argument, "TrainConfig: batch size must be >= 1");
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::invalid_argument,
          "TrainConfig: train fraction must lie in (0, 1)");
  require(patience >= 0, ErrorKind::invalid_argument, "TrainConfig: patience must be >= 0");
  require(jitter_samples >= 0, ErrorKind::invalid_argument, "TrainConfig: jitter must be >= 0");
  require(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0, ErrorKind::invalid_argument,
          "TrainConfig: final learning-rate fraction must lie in (0, 1]");
}

template <typename Scalar>
std::optional<std::vector<Scalar>> prepare_input(const ComplexBaseband& base, const NetworkSpec& spec,
                                                 const InputPrep& prep) {
  require(static_cast<std::size_t>(spec.input_rows) == 2 * base.channels, ErrorKind::incompatible_checkpoint,
          "network expects " + std::to_string(spec.input_rows / 2) + " channels, record has " +
              std::to_string(base.channels));
  EchoWindow window;
  try {
    window = detect_echo_window(base, prep.detect);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::no_echo_found) return std::nullopt;
    throw;
  }

  double power = 0.0;
  for (std::size_t ch = 0; ch < base.channels; ++ch)
    for (std::size_t n = window.begin; n < window.end; ++n) power += std::norm(base.at(ch, n));
  const double rms = std::sqrt(power / static_cast<double>(base.channels * window.size()));
  cdouble scale = rms > 0.0 ? 1.0 / rms : 1.0;
  if (prep.normalization == NormalizationRule::window_rms_phase) {
    cdouble ref = 0.0;
    for (std::size_t n = window.begin; n < window.end; ++n) ref += base.at(0, n);
    if (std::abs(ref) > 0.0) scale *= std::conj(ref) / std::abs(ref);
  }

  const auto T = static_cast<std::ptrdiff_t>(spec.input_length);
  const auto len = static_cast<std::ptrdiff_t>(base.samples_per_channel);
  const std::ptrdiff_t center = static_cast<std::ptrdiff_t>(window.begin + window.end) / 2;
  const std::ptrdiff_t start = center - T / 2;

  std::vector<Scalar> out(static_cast<std::size_t>(spec.input_rows * T), Scalar(0));
  for (std::size_t ch = 0; ch < base.channels; ++ch) {
    Scalar* re = out.data() + (2 * ch) * T;
    Scalar* im = re + T;
    for (std::ptrdiff_t t = std::max<std::ptrdiff_t>(0, -start); t < T && start + t < len; ++t) {
      const cdouble z = base.at(ch, static_cast<std::size_t>(start + t)) * scale;
      re[t] = static_cast<Scalar>(z.real());
      im[t] = static_cast<Scalar>(z.imag());
    }
  }
  return out;
}

template <typename Scalar>
std::vector<Scalar> mirror_input(std::span<const Scalar> input, const NetworkSpec& spec) {
  require(input.size() == spec.input_size(), ErrorKind::shape_mismatch, "mirror_input: wrong input size");
  const std::size_t T = static_cast<std::size_t>(spec.input_length);
  const std::size_t channels = static_cast<std::size_t>(spec.input_rows) / 2;
  std::vector<Scalar> out(input.size());
  for (std::size_t ch = 0; ch < channels; ++ch)
    std::copy_n(input.begin() + static_cast<std::ptrdiff_t>(2 * ch * T), 2 * T,
                out.begin() + static_cast<std::ptrdiff_t>(2 * (channels - 1 - ch) * T));
  return out;
}

template std::optional<std::vector<float>> prepare_input(const ComplexBaseband&, const NetworkSpec&,
                                                         const InputPrep&);
template std::optional<std::vector<double>> prepare_input(const ComplexBaseband&, const NetworkSpec&,
                                                          const InputPrep&);
template std::vector<float> mirror_input(std::span<const float>, const NetworkSpec&);
template std::vector<double> mirror_input(std::span<const double>, const NetworkSpec&);

namespace {

struct Sample {
  std::vector<float> input;
  float label = 0.0f;
};

// A training record prepared 2 * jitter samples wider than the network input,
// so every epoch can take a shifted, phase-rotated crop of it.
struct WideSample {
  std::vector<float> input;  // [rows][T + 2 jitter]
  float label = 0.0f;
};

void crop_into(const WideSample& s, std::size_t rows, std::size_t T, std::size_t offset, float c, float sn,
               std::vector<float>& out) {
  const std::size_t wide = s.input.size() / rows;
  out.resize(rows * T);
  for (std::size_t ch = 0; ch < rows / 2; ++ch) {
    const float* re = s.input.data() + 2 * ch * wide + offset;
    const float* im = re + wide;
    float* out_re = out.data() + 2 * ch * T;
    float* out_im = out_re + T;
    for (std::size_t t = 0; t < T; ++t) {
      out_re[t] = re[t] * c - im[t] * sn;
      out_im[t] = re[t] * sn + im[t] * c;
    }
  }
}

std::vector<Sample> prepare_samples(const Dataset& dataset, std::span<const std::size_t> indices,
                                    const NetworkSpec& spec, const InputPrep& prep, std::size_t& skipped,
                                    bool mirrored = false) {
  std::vector<Sample> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) {
    const auto& rec = dataset.records[i];
    require(std::isfinite(rec.doa_deg), ErrorKind::invalid_argument, "train: record without a DoA label");
    // Mirrored copies go through the full pipeline, detection included, exactly
    // as a channel-swapped record would at inference.
    auto input = mirrored ? prepare_input<float>(swap_channels(rec.payload), spec, prep)
                          : prepare_input<float>(rec.payload, spec, prep);
    if (!input) {
      if (!mirrored) ++skipped;
      continue;
    }
    const double label = label_from_degrees(mirrored ? -rec.doa_deg : rec.doa_deg);
    out.push_back({std::move(*input), static_cast<float>(label)});
  }
  return out;
}

void shuffle(std::vector<std::size_t>& order, std::uint64_t seed) {
  SplitMix64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
}

}  // namespace

TrainResult train(const Dataset& dataset, const NetworkSpec& spec, const TrainConfig& config,
                  const AdamHyper& hyper, std::uint64_t seed, const TrainOptions& options) {
  require(!dataset.empty(), ErrorKind::empty_dataset, "train: dataset is empty");
  config.validate();
  hyper.validate();
  spec.validate();

  TrainResult result;
  result.split = options.split ? *options.split : split(dataset, config.train_fraction, config.shuffle_seed);

  const auto jitter = static_cast<std::size_t>(config.jitter_samples);
  NetworkSpec wide_spec = spec;
  wide_spec.input_length = spec.input_length + 2 * config.jitter_samples;
  std::vector<WideSample> train_set;
  for (auto& s : prepare_samples(dataset, result.split.train, wide_spec, options.prep, result.skipped_records))
    train_set.push_back({std::move(s.input), s.label});
  const auto test_set = prepare_samples(dataset, result.split.test, spec, options.prep, result.skipped_records);
  require(!train_set.empty(), ErrorKind::empty_dataset, "train: no training record has a detectable echo");
  if (config.mirror_augment) {
    require(spec.input_rows == 4, ErrorKind::invalid_argument, "mirror augmentation needs a two-element array");
    std::size_t ignored = 0;
    for (auto& s : prepare_samples(dataset, result.split.train, wide_spec, options.prep, ignored, true))
      train_set.push_back({std::move(s.input), s.label});
  }
  const bool augmenting = jitter > 0 || config.phase_augment || config.mirror_augment;
  std::vector<float> crop;

  auto net = Network<float>::initialized(spec, seed);
  auto state = AdamState<float>::zeros_like(net.parameters());
  auto grads = net.zero_gradients();
  Workspace<float> ws;

  const double nan = std::numeric_limits<double>::quiet_NaN();
  double best = std::numeric_limits<double>::infinity();
  ParameterTensors<float> best_params = net.parameters();
  int best_epoch = 0;
  int since_best = 0;
  double last_train_loss = nan;

  std::vector<std::size_t> order(train_set.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, hash_key(config.shuffle_seed, 0x7261696eULL, static_cast<std::uint64_t>(epoch)));
    AdamHyper epoch_hyper = hyper;
    if (config.epochs > 1) {
      const double progress = static_cast<double>(epoch - 1) / (config.epochs - 1);
      const double f = config.final_lr_fraction;
      epoch_hyper.learning_rate *= f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }

    double sq_sum = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t b1 = std::min(order.size(), b0 + static_cast<std::size_t>(config.batch_size));
      const float inv_batch = 1.0f / static_cast<float>(b1 - b0);
      for (auto& g : grads) std::fill(g.begin(), g.end(), 0.0f);
      for (std::size_t k = b0; k < b1; ++k) {
        const WideSample& s = train_set[order[k]];
        std::span<const float> input = s.input;
        if (augmenting) {
          const std::uint64_t key = hash_key(config.shuffle_seed, static_cast<std::uint64_t>(epoch), order[k]);
          const std::size_t offset = jitter > 0 ? SplitMix64(key).below(2 * jitter + 1) : 0;
          double c = 1.0, sn = 0.0;
          if (config.phase_augment) {
            const double phi = 2.0 * std::numbers::pi * to_unit(mix64(key ^ 0x70686173ULL));
            c = std::cos(phi);
            sn = std::sin(phi);
          }
          crop_into(s, static_cast<std::size_t>(spec.input_rows), static_cast<std::size_t>(spec.input_length),
                    offset, static_cast<float>(c), static_cast<float>(sn), crop);
          input = crop;
        }
        const float p = net.forward(input, ws);
        const float r = p - s.label;
        sq_sum += static_cast<double>(r) * r;
        net.backward_from(2.0f * r * inv_batch, ws, grads);
      }
      adam_step(net.parameters(), grads, epoch_hyper, state);
    }
    const double train_loss = sq_sum / static_cast<double>(order.size());
    require(std::isfinite(train_loss), ErrorKind::divergence,
            "train: loss became non-finite in epoch " + std::to_string(epoch));
    last_train_loss = train_loss;

    EpochStats stats{epoch, train_loss, nan, nan};
    if (!test_set.empty()) {
      double loss = 0.0, abs_err = 0.0;
      for (const auto& s : test_set) {
        const double p = net.forward(s.input, ws);
        loss += (p - s.label) * (p - s.label);
        abs_err += std::abs(degrees_from_output(p) - degrees_from_output(s.label));
      }
      stats.heldout_loss = loss / static_cast<double>(test_set.size());
      stats.heldout_mae_deg = abs_err / static_cast<double>(test_set.size());
      require(std::isfinite(stats.heldout_loss), ErrorKind::divergence,
              "train: held-out loss became non-finite in epoch " + std::to_string(epoch));
    }
    result.history.push_back(stats);
    if (options.on_epoch) options.on_epoch(stats);

    const double score = test_set.empty() ? stats.train_loss : stats.heldout_loss;
    if (score < best) {
      best = score;
      best_epoch = epoch;
      best_params = net.parameters();
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }

  net.set_parameters(std::move(best_params));
  TrainingMetadata meta;
  meta.seed = seed;
  meta.epochs_run = static_cast<std::uint32_t>(result.history.size());
  meta.best_epoch = static_cast<std::uint32_t>(best_epoch);
  meta.best_heldout_loss = test_set.empty() ? nan : best;
  meta.final_train_loss = last_train_loss;
  result.checkpoint = Checkpoint::from_network(net, options.prep, meta);
  return result;
}

NeuralEstimator::NeuralEstimator(const Checkpoint& checkpoint)
    : net_(checkpoint.network<float>()), prep_(checkpoint.prep) {}

std::optional<double> NeuralEstimator::raw_output(const ComplexBaseband& base) const {
  const auto input = prepare_input<float>(base, net_.spec(), prep_);
  if (!input) return std::nullopt;
  return static_cast<double>(net_.predict(*input));
}

DoaEstimate NeuralEstimator::estimate(const ComplexBaseband& base) const {
  const auto raw = raw_output(base);
  if (!raw) return DoaEstimate::fallback();
  DoaEstimate e;
  e.angle_deg = degrees_from_output(*raw);
  e.status = DoaStatus::converged;
  e.ambiguity = {e.angle_deg};
  return e;
}

DoaEstimate predict_doa(const Checkpoint& checkpoint, const ComplexBaseband& base) {
  return NeuralEstimator(checkpoint).estimate(base);
}

}  // namespace echodoa
