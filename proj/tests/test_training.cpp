#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <sstream>
#include <unistd.h>

#include "echodoa/binary_io.hpp"
#include "echodoa/checkpoint.hpp"
#include "echodoa/counter_rng.hpp"
#include "echodoa/error.hpp"
#include "echodoa/training.hpp"

using namespace echodoa;
using doctest::Approx;

namespace {

Dataset noiseless_set(int per_cell, std::vector<double> angles = angle_grid(-60.0, 60.0, 10.0)) {
  SweepSpec s;
  s.angles_deg = std::move(angles);
  s.snrs_db = {kNoiseless};
  s.records_per_cell = per_cell;
  return generate_dataset(s);
}

Checkpoint constant_output(double raw) {
  Checkpoint c;
  c.spec = NetworkSpec::standard(128);
  for (const auto& shape : c.spec.parameter_shapes()) c.weights.emplace_back(shape.size(), 0.0);
  c.weights.back()[0] = std::atanh(raw);
  return c;
}

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error thrown");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("prepare_input") {
  const SimConfig config{};
  const auto g = ArrayGeometry::pair_in_wavelengths(0.5, wavelength(config));
  const auto base = simulate_baseband({30.0, 0.68, kNoiseless, 0}, g, config, 0);
  const NetworkSpec spec = NetworkSpec::standard(128);
  InputPrep prep;
  const auto input = prepare_input<double>(base, spec, prep);
  REQUIRE(input.has_value());
  REQUIRE(input->size() == 4 * 128);

  SUBCASE("rows are ch0 re, ch0 im, ch1 re, ch1 im, centered on the window") {
    const auto win = detect_echo_window(base, prep.detect);
    const std::size_t start = (win.begin + win.end) / 2 - 64;
    double window_power = 0.0;
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t n = win.begin; n < win.end; ++n) window_power += std::norm(base.at(ch, n));
    const double scale = 1.0 / std::sqrt(window_power / static_cast<double>(2 * win.size()));
    for (std::size_t t = 0; t < 128; ++t) {
      CHECK((*input)[t] == Approx(base.at(0, start + t).real() * scale).epsilon(1e-12));
      CHECK((*input)[128 + t] == Approx(base.at(0, start + t).imag() * scale));
      CHECK((*input)[256 + t] == Approx(base.at(1, start + t).real() * scale));
      CHECK((*input)[384 + t] == Approx(base.at(1, start + t).imag() * scale));
    }
  }
  SUBCASE("phase-referenced rule makes channel 0 real-positive on average") {
    prep.normalization = NormalizationRule::window_rms_phase;
    const auto ref = prepare_input<double>(base, spec, prep);
    const auto win = detect_echo_window(base, prep.detect);
    const std::size_t start = (win.begin + win.end) / 2 - 64;
    double re = 0.0, im = 0.0;
    for (std::size_t n = win.begin; n < win.end; ++n) {
      re += (*ref)[n - start];
      im += (*ref)[128 + n - start];
    }
    CHECK(re > 0.0);
    CHECK(std::abs(im) < 1e-9 * re);
  }
  SUBCASE("swapping channels equals mirror_input up to the window scale") {
    // Detection may pick a slightly different window on the swapped record,
    // which changes only the RMS scale.
    const auto swapped = prepare_input<double>(swap_channels(base), spec, prep);
    const auto mirrored = mirror_input<double>(*input, spec);
    REQUIRE(swapped->size() == mirrored.size());
    const auto peak = std::distance(mirrored.begin(), std::max_element(mirrored.begin(), mirrored.end(),
        [](double a, double b) { return std::abs(a) < std::abs(b); }));
    const double k = (*swapped)[peak] / mirrored[peak];
    CHECK(k == Approx(1.0).epsilon(0.05));
    for (std::size_t i = 0; i < mirrored.size(); ++i)
      CHECK((*swapped)[i] == Approx(k * mirrored[i]).epsilon(1e-9).scale(mirrored[peak]));
  }
  SUBCASE("no echo -> nullopt; wrong channel count -> incompatible") {
    ComplexBaseband zero = base;
    std::fill(zero.data.begin(), zero.data.end(), cdouble{});
    CHECK_FALSE(prepare_input<double>(zero, spec, prep).has_value());
    NetworkSpec three = spec;
    three.input_rows = 6;
    CHECK(kind_of([&] { (void)prepare_input<double>(base, three, prep); }) == ErrorKind::incompatible_checkpoint);
  }
}

TEST_CASE("predict_doa scaling") {
  const SimConfig config{};
  const auto g = ArrayGeometry::pair_in_wavelengths(0.5, wavelength(config));
  const auto base = simulate_baseband({-20.0, 0.8, kNoiseless, 0}, g, config, 0);
  const auto half = predict_doa(constant_output(0.5), base);
  CHECK(half.converged());
  CHECK(half.angle_deg == Approx(45.0).epsilon(1e-6));
  CHECK(half.ambiguity == std::vector<double>{half.angle_deg});
  CHECK(std::abs(predict_doa(constant_output(0.0), base).angle_deg) < 1e-12);
  ComplexBaseband silent = base;
  std::fill(silent.data.begin(), silent.data.end(), cdouble{});
  const auto fb = predict_doa(constant_output(0.5), silent);
  CHECK(fb.status == DoaStatus::fallback);
  CHECK(fb.angle_deg == 0.0);
  CHECK(degrees_from_output(label_from_degrees(33.0)) == Approx(33.0));
}

TEST_CASE("checkpoint container") {
  Checkpoint c = Checkpoint::from_network(Network<double>::initialized(NetworkSpec::reduced(), 3), {}, {});
  c.prep.normalization = NormalizationRule::window_rms_phase;
  c.prep.detect.threshold_factor = 4.0;
  c.meta.seed = 3;
  c.meta.epochs_run = 12;
  c.meta.best_epoch = 9;
  c.meta.best_heldout_loss = 0.0125;
  const auto bytes = checkpoint_to_bytes(c);
  CHECK(std::memcmp(bytes.data(), "EDCK", 4) == 0);

  SUBCASE("round trip is bit-exact") {
    const Checkpoint back = checkpoint_from_bytes(bytes);
    CHECK(back.spec == c.spec);
    CHECK(back.weights == c.weights);
    CHECK(back.prep.normalization == c.prep.normalization);
    CHECK(back.prep.detect.threshold_factor == 4.0);
    CHECK(back.meta.best_epoch == 9);
    CHECK(std::isnan(back.meta.final_train_loss));
    CHECK(checkpoint_to_bytes(back) == bytes);
    const auto path = std::filesystem::temp_directory_path() / ("echodoa_ck_" + std::to_string(::getpid()));
    save_checkpoint(c, path);
    CHECK(checkpoint_to_bytes(load_checkpoint(path)) == bytes);
    std::filesystem::remove(path);
  }
  SUBCASE("corruption, version and shape") {
    auto bad = bytes;
    bad[bad.size() - 20] ^= 0x01;
    CHECK(kind_of([&] { (void)checkpoint_from_bytes(bad); }) == ErrorKind::checksum_failure);
    bad = bytes;
    bad[4] = 7;
    CHECK(kind_of([&] { (void)checkpoint_from_bytes(bad); }) == ErrorKind::version_mismatch);
    Checkpoint wrong = c;
    wrong.weights.pop_back();
    CHECK(kind_of([&] { (void)wrong.network<float>(); }) == ErrorKind::incompatible_checkpoint);
  }
  SUBCASE("text export lists every tensor") {
    std::ostringstream out;
    export_checkpoint_text(c, out);
    const std::string text = out.str();
    for (const auto& shape : c.spec.parameter_shapes()) CHECK(text.find("# " + shape.name + " ") != std::string::npos);
  }
}

TEST_CASE("train: memorizes 32 noiseless records") {
  // 8 angles x 4 records, all used for training.
  const Dataset ds = noiseless_set(4, {-52.0, -37.0, -21.0, -6.0, 8.0, 19.0, 33.0, 58.0});
  SplitIndices all;
  for (std::size_t i = 0; i < ds.size(); ++i) all.train.push_back(i);
  TrainConfig config;
  config.epochs = 200;
  config.batch_size = 8;
  config.mirror_augment = false;
  config.jitter_samples = 0;
  config.phase_augment = false;
  config.final_lr_fraction = 1.0;
  TrainOptions options;
  options.split = all;
  const auto result = train(ds, NetworkSpec::standard(128), config, AdamHyper{}, 1, options);
  CHECK(result.history.size() == 200);
  CHECK(std::isnan(result.history.back().heldout_loss));
  NeuralEstimator net(result.checkpoint);
  double mae = 0.0;
  for (const auto& r : ds.records) mae += std::abs(net.estimate(r.payload).angle_deg - r.doa_deg);
  CHECK(mae / static_cast<double>(ds.size()) < 1.0);
}

TEST_CASE("train: determinism, divergence guard, validation") {
  const Dataset ds = noiseless_set(2);
  TrainConfig config;
  config.epochs = 3;
  config.batch_size = 8;
  config.mirror_augment = true;
  config.jitter_samples = 4;
  config.phase_augment = true;
  const auto a = train(ds, NetworkSpec::standard(64), config, AdamHyper{}, 5);
  const auto b = train(ds, NetworkSpec::standard(64), config, AdamHyper{}, 5);
  REQUIRE(a.history.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history[e].heldout_loss == b.history[e].heldout_loss);
  }
  CHECK(checkpoint_to_bytes(a.checkpoint) == checkpoint_to_bytes(b.checkpoint));
  CHECK(a.checkpoint.meta.epochs_run == 3);

  AdamHyper wild;
  wild.learning_rate = 1e30;
  CHECK(kind_of([&] { (void)train(ds, NetworkSpec::standard(64), config, wild, 5); }) == ErrorKind::divergence);
  CHECK(kind_of([&] { (void)train(Dataset{}, NetworkSpec::standard(64), config, AdamHyper{}, 5); }) ==
        ErrorKind::empty_dataset);
  TrainConfig bad = config;
  bad.train_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = config;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("train: shuffled labels carry no signal") {
  Dataset ds = noiseless_set(8);
  // A fixed derangement-like permutation of the labels.
  std::vector<double> labels;
  for (const auto& r : ds.records) labels.push_back(r.doa_deg);
  SplitMix64 rng(99);
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
  for (std::size_t i = 0; i < labels.size(); ++i) ds.records[i].doa_deg = labels[i];

  TrainConfig config;
  config.epochs = 15;
  config.batch_size = 16;
  const auto result = train(ds, NetworkSpec::standard(64), config, AdamHyper{}, 2);
  double mean = 0.0, var = 0.0;
  for (auto i : result.split.test) mean += label_from_degrees(ds.records[i].doa_deg);
  mean /= static_cast<double>(result.split.test.size());
  for (auto i : result.split.test) var += std::pow(label_from_degrees(ds.records[i].doa_deg) - mean, 2);
  var /= static_cast<double>(result.split.test.size());
  double best = 1e9;
  for (const auto& e : result.history) best = std::min(best, e.heldout_loss);
  CHECK(best > 0.75 * var);
}

TEST_CASE("train: mirror-augmented model treats mirrored inputs alike") {
  SweepSpec s;
  s.snrs_db = {20.0};
  s.records_per_cell = 16;
  const Dataset ds = generate_dataset(s);
  TrainConfig config;
  config.mirror_augment = true;
  const auto result = train(ds, NetworkSpec::standard(128), config, AdamHyper{}, 4);
  NeuralEstimator net(result.checkpoint);

  // A large fresh test set keeps single outliers from dominating either MAE.
  s.records_per_cell = 48;
  s.master_seed = 1001;
  const Dataset test = generate_dataset(s);
  double plain = 0.0, mirrored = 0.0;
  for (const auto& r : test.records) {
    plain += std::abs(net.estimate(r.payload).angle_deg - r.doa_deg);
    mirrored += std::abs(net.estimate(swap_channels(r.payload)).angle_deg + r.doa_deg);
  }
  MESSAGE("test MAE plain " << plain / test.size() << ", mirrored " << mirrored / test.size());
  CHECK(std::abs(mirrored - plain) <= 0.2 * plain);
}
