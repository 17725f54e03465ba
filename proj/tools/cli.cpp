#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>

#include "echodoa/capture.hpp"
#include "echodoa/config_file.hpp"
#include "echodoa/dataset.hpp"
#include "echodoa/error.hpp"
#include "echodoa/evaluation.hpp"
#include "echodoa/grad_check.hpp"
#include "echodoa/music.hpp"
#include "echodoa/training.hpp"
#include "echodoa/triangulation.hpp"

namespace echodoa::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

struct GlobalArgs {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  unsigned workers = 1;
  std::string out;
};

struct Context {
  GlobalArgs global;
  SimConfig config;
  std::uint64_t seed = 0;
  std::ostream& out;
};

/// "min:max:step" or a single value.
std::vector<double> parse_grid(const std::string& text, const char* what) {
  std::vector<double> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ':')) parts.push_back(parse_double(what, item));
  require(parts.size() == 1 || parts.size() == 3, ErrorKind::invalid_argument,
          std::string(what) + ": expected a value or min:max:step, got '" + text + "'");
  if (parts.size() == 1) return parts;
  return angle_grid(parts[0], parts[1], parts[2]);
}

Point2 parse_point(const std::string& text, const char* what) {
  const auto comma = text.find(',');
  require(comma != std::string::npos, ErrorKind::invalid_argument,
          std::string(what) + ": expected x,y, got '" + text + "'");
  return {parse_double(what, text.substr(0, comma)), parse_double(what, text.substr(comma + 1))};
}

double parse_snr(const std::string& text) {
  if (text == "inf" || text == "noiseless") return kNoiseless;
  return parse_double("snr", text);
}

std::string require_out(const Context& ctx, const char* what) {
  if (ctx.global.out.empty()) throw CLI::RequiredError(std::string("--out (") + what + ")");
  return ctx.global.out;
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::ofstream open_text(const fs::path& path) {
  ensure_parent(path);
  std::ofstream f(path);
  require(static_cast<bool>(f), ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  f << std::setprecision(17);
  return f;
}

ordered_json estimate_json(const DoaEstimate& e) {
  ordered_json j;
  j["angle_deg"] = e.angle_deg;
  j["status"] = std::string(to_string(e.status));
  j["ambiguity_deg"] = e.ambiguity;
  j["prominence"] = e.prominence;
  return j;
}

ordered_json fix_json(const PositionFix& f) {
  ordered_json j;
  j["x_m"] = f.position.x;
  j["y_m"] = f.position.y;
  j["source"] = f.source == FixSource::fused ? "fused" : "triangulation";
  j["chosen_doa_deg"] = f.chosen_doa_deg;
  j["ellipse"] = {{"major_m", f.ellipse.major},
                  {"minor_m", f.ellipse.minor},
                  {"orientation_deg", f.ellipse.orientation_deg},
                  {"sigma_x_m", f.ellipse.sigma_x()},
                  {"sigma_y_m", f.ellipse.sigma_y()}};
  return j;
}

// ---------------------------------------------------------------- dataset

struct SweepArgs {
  std::string angles = "-60:60:10";
  std::string snrs = "-30:20:5";
  int per_cell = 40;
  double spacing = 0.5;
  double range_min = 0.5;
  double range_max = 1.25;
  double aperture = 60.0;

  void add_to(CLI::App* app) {
    app->add_option("--angles", angles, "DoA grid in degrees, min:max:step")->capture_default_str();
    app->add_option("--snrs", snrs, "SNR grid in dB, min:max:step")->capture_default_str();
    app->add_option("--per-cell", per_cell, "records per (angle, SNR) cell")->capture_default_str();
    app->add_option("--spacing", spacing, "element spacing in wavelengths")->capture_default_str();
    app->add_option("--range-min", range_min, "minimum target range, m")->capture_default_str();
    app->add_option("--range-max", range_max, "maximum target range, m")->capture_default_str();
    app->add_option("--aperture", aperture, "largest allowed |DoA|, degrees")->capture_default_str();
  }

  SweepSpec spec(const Context& ctx) const {
    SweepSpec s;
    s.config = ctx.config;
    s.geometry = ArrayGeometry::pair_in_wavelengths(spacing, wavelength(ctx.config));
    s.angles_deg = parse_grid(angles, "--angles");
    s.snrs_db = parse_grid(snrs, "--snrs");
    s.records_per_cell = per_cell;
    s.range_min_m = range_min;
    s.range_max_m = range_max;
    s.aperture_deg = aperture;
    s.master_seed = ctx.seed;
    s.validate();
    return s;
  }
};

// ---------------------------------------------------------------- train

struct TrainArgs {
  int epochs = TrainConfig{}.epochs;
  int batch = TrainConfig{}.batch_size;
  double train_fraction = TrainConfig{}.train_fraction;
  std::uint64_t shuffle_seed = TrainConfig{}.shuffle_seed;
  int patience = 0;
  int input_length = 128;
  double learning_rate = AdamHyper{}.learning_rate;
  double threshold = TrainOptions{}.prep.detect.threshold_factor;
  double final_lr_fraction = TrainConfig{}.final_lr_fraction;
  int jitter = TrainConfig{}.jitter_samples;
  bool no_mirror = false;
  bool no_phase = false;
  bool reduced = false;

  void add_to(CLI::App* app) {
    app->add_option("--epochs", epochs)->capture_default_str();
    app->add_option("--batch", batch)->capture_default_str();
    app->add_option("--train-fraction", train_fraction)->capture_default_str();
    app->add_option("--shuffle-seed", shuffle_seed, "split and batch-order seed")->capture_default_str();
    app->add_option("--patience", patience, "early-stop patience in epochs (0 = off)")->capture_default_str();
    app->add_option("--input-length", input_length, "network input length T")->capture_default_str();
    app->add_option("--lr", learning_rate, "ADAM learning rate")->capture_default_str();
    app->add_option("--threshold", threshold, "echo detection threshold factor for the network")
        ->capture_default_str();
    app->add_option("--final-lr-fraction", final_lr_fraction, "cosine decay: last-epoch rate / base rate")
        ->capture_default_str();
    app->add_option("--jitter", jitter, "random crop offset range in samples")->capture_default_str();
    app->add_flag("--no-mirror", no_mirror, "skip channel-swapped copies with negated labels");
    app->add_flag("--no-phase-augment", no_phase, "skip random common carrier-phase rotation");
    app->add_flag("--reduced", reduced, "use the small gradient-check architecture");
  }

  TrainConfig config() const {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch;
    c.train_fraction = train_fraction;
    c.shuffle_seed = shuffle_seed;
    c.patience = patience;
    c.mirror_augment = !no_mirror;
    c.final_lr_fraction = final_lr_fraction;
    c.jitter_samples = jitter;
    c.phase_augment = !no_phase;
    c.validate();
    return c;
  }

  NetworkSpec spec() const {
    NetworkSpec s = reduced ? NetworkSpec::reduced() : NetworkSpec::standard(input_length);
    s.validate();
    return s;
  }

  TrainOptions options() const {
    TrainOptions o;
    require(threshold > 1.0, ErrorKind::invalid_argument, "--threshold must be > 1");
    o.prep.detect.threshold_factor = threshold;
    return o;
  }
};

void write_history(const std::vector<EpochStats>& history, const fs::path& path) {
  auto f = open_text(path);
  f << "epoch,train_loss,heldout_loss,heldout_mae_deg\n";
  for (const auto& h : history)
    f << h.epoch << ',' << h.train_loss << ',' << h.heldout_loss << ',' << h.heldout_mae_deg << '\n';
}

TrainResult run_training(const Dataset& ds, const TrainArgs& args, const Context& ctx) {
  TrainOptions opts = args.options();
  opts.on_epoch = [&ctx](const EpochStats& s) {
    ctx.out << "epoch " << s.epoch << " train_loss=" << s.train_loss << " heldout_loss=" << s.heldout_loss
            << " heldout_mae_deg=" << s.heldout_mae_deg << '\n'
            << std::flush;
  };
  return train(ds, args.spec(), args.config(), AdamHyper{.learning_rate = args.learning_rate}, ctx.seed, opts);
}

// ---------------------------------------------------------------- eval

std::vector<DomainTag> parse_domains(const std::vector<std::string>& names) {
  std::vector<DomainTag> out;
  for (const auto& n : names) out.push_back(parse_domain_tag(n));
  if (out.empty()) out.push_back(DomainTag::full);
  return out;
}

TableFormat parse_format(const std::string& name) {
  if (name == "csv") return TableFormat::csv;
  if (name == "json") return TableFormat::json;
  fail(ErrorKind::invalid_argument, "unknown format '" + name + "' (csv or json)");
}

void print_crossover(const MetricsTable& table, const std::string& a, const std::string& b, std::ostream& out) {
  try {
    out << "snr_crossover(" << a << ", " << b << ") = " << snr_crossover(table, a, b) << " dB\n";
  } catch (const Error& e) {
    out << "snr_crossover unavailable: " << e.what() << '\n';
  }
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"echodoa: ultrasonic two-element DoA simulation, MUSIC and CNN estimation", "echodoa"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalArgs g;
  app.add_option("--config", g.config_path, "key=value SimConfig file (env ECHODOA_CONFIG)");
  app.add_option("--seed", g.seed, "master seed (default: rng_seed from the config)");
  app.add_option("--workers", g.workers, "worker threads for dataset/eval/sweep")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "output path");

  // simulate
  auto* sim = app.add_subcommand("simulate", "one scenario -> baseband dump (+ waveform, capture, pseudospectrum)");
  double sim_doa = 30.0, sim_range = 0.68, sim_spacing = 0.5;
  std::string sim_snr = "inf", sim_waveform, sim_capture, sim_spectrum;
  sim->add_option("--doa", sim_doa, "degrees")->capture_default_str();
  sim->add_option("--range", sim_range, "meters")->capture_default_str();
  sim->add_option("--snr", sim_snr, "dB, or inf for noiseless")->capture_default_str();
  sim->add_option("--spacing", sim_spacing, "element spacing in wavelengths")->capture_default_str();
  sim->add_option("--waveform", sim_waveform, "also write the raw waveform as text");
  sim->add_option("--capture", sim_capture, "also write the raw waveform as an EDCF capture");
  sim->add_option("--spectrum", sim_spectrum, "also write the MUSIC pseudospectrum table");

  // dataset
  auto* dset = app.add_subcommand("dataset", "generate a labeled EDDS dataset (--out required)");
  SweepArgs dset_args;
  dset_args.add_to(dset);
  std::string dset_index;
  dset->add_option("--index", dset_index, "also write a CSV index of the records");

  // train
  auto* trn = app.add_subcommand("train", "train the network on a dataset -> checkpoint (--out required)");
  std::string trn_dataset, trn_history, trn_export;
  TrainArgs trn_args;
  trn->add_option("--dataset", trn_dataset, "EDDS dataset")->required();
  trn->add_option("--history", trn_history, "loss history CSV (default <out>.history.csv)");
  trn->add_option("--export-text", trn_export, "also dump the weights as plain text");
  trn_args.add_to(trn);

  // eval
  auto* evl = app.add_subcommand("eval", "evaluate estimators on a dataset -> metrics table (--out required)");
  std::string evl_dataset, evl_checkpoint, evl_format = "csv";
  std::vector<std::string> evl_domains;
  bool evl_no_music = false, evl_heldout = false;
  double evl_fraction = TrainConfig{}.train_fraction;
  std::uint64_t evl_split_seed = TrainConfig{}.shuffle_seed;
  double evl_threshold = MusicOptions{}.detect.threshold_factor;
  evl->add_option("--dataset", evl_dataset, "EDDS dataset")->required();
  evl->add_option("--checkpoint", evl_checkpoint, "network checkpoint to evaluate");
  evl->add_flag("--no-music", evl_no_music, "skip the MUSIC estimator");
  evl->add_option("--music-threshold", evl_threshold, "MUSIC echo detection threshold factor")->capture_default_str();
  evl->add_option("--domain", evl_domains, "full, inside30, outside30 (repeatable)");
  evl->add_option("--format", evl_format, "csv or json")->capture_default_str();
  evl->add_flag("--heldout", evl_heldout, "only the held-out part of the train/test split");
  evl->add_option("--train-fraction", evl_fraction, "split used with --heldout")->capture_default_str();
  evl->add_option("--shuffle-seed", evl_split_seed, "split seed used with --heldout")->capture_default_str();

  // music
  auto* mus = app.add_subcommand("music", "MUSIC estimate for one record, printed as JSON");
  std::string mus_capture, mus_dataset, mus_spectrum;
  std::size_t mus_record = 0;
  double mus_step = MusicOptions{}.grid_step_deg;
  mus->add_option("--capture", mus_capture, "EDCF capture file");
  mus->add_option("--dataset", mus_dataset, "EDDS dataset");
  mus->add_option("--record", mus_record, "record index")->capture_default_str();
  mus->add_option("--grid-step", mus_step, "pseudospectrum grid step, degrees")->capture_default_str();
  mus->add_option("--spectrum", mus_spectrum, "also write the pseudospectrum table");

  // triangulate
  auto* tri = app.add_subcommand("triangulate", "ranges (+ optional DoA) -> position fix, printed as JSON");
  std::string tri_s1 = "-0.25,0", tri_s2 = "0.25,0";
  double tri_r1 = 0.0, tri_r2 = 0.0, tri_sigma = 0.01, tri_sigma_theta = FusionOptions{}.sigma_theta_deg;
  std::optional<double> tri_doa;
  tri->add_option("--s1", tri_s1, "sensor 1 position x,y in m")->capture_default_str();
  tri->add_option("--s2", tri_s2, "sensor 2 position x,y in m")->capture_default_str();
  tri->add_option("--r1", tri_r1, "range from sensor 1, m")->required();
  tri->add_option("--r2", tri_r2, "range from sensor 2, m")->required();
  tri->add_option("--sigma-r", tri_sigma, "range standard deviation, m")->capture_default_str();
  tri->add_option("--doa", tri_doa, "DoA in degrees to fuse with the ranges");
  tri->add_option("--sigma-theta", tri_sigma_theta, "DoA standard deviation, degrees")->capture_default_str();

  // sweep
  auto* swp = app.add_subcommand("sweep", "dataset -> train -> held-out eval in one run (--out = directory)");
  SweepArgs swp_sweep;
  TrainArgs swp_train;
  bool swp_keep = false;
  std::string swp_format = "csv";
  swp_sweep.add_to(swp);
  swp_train.add_to(swp);
  swp->add_flag("--keep-dataset", swp_keep, "also save dataset.edds");
  swp->add_option("--format", swp_format, "csv or json")->capture_default_str();

  // gradcheck
  auto* gck = app.add_subcommand("gradcheck", "finite-difference check of the reduced network's gradients");
  GradCheckOptions gck_opts;
  int gck_seeds = 1;
  gck->add_option("--seeds", gck_seeds, "number of consecutive seeds to check")->capture_default_str();
  gck->add_option("--epsilon", gck_opts.epsilon)->capture_default_str();
  gck->add_option("--tolerance", gck_opts.tolerance)->capture_default_str();
  gck->add_option("--probes", gck_opts.probes, "parameters probed per seed")->capture_default_str();

  std::vector<const char*> argv{"echodoa"};
  for (const auto& a : args) argv.push_back(a.c_str());

  auto report = [&err](int code, std::string_view kind, std::string_view message) {
    err << "error: kind=" << kind << " message=" << message << '\n';
    return code;
  };

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());

    Context ctx{g, {}, 0, out};
    std::string cfg = g.config_path;
    if (cfg.empty())
      if (const char* env = std::getenv("ECHODOA_CONFIG")) cfg = env;
    if (!cfg.empty()) ctx.config = load_sim_config(cfg);
    ctx.config.validate();
    ctx.seed = g.seed.value_or(ctx.config.rng_seed);
    out << std::setprecision(10);

    if (*sim) {
      const std::string path = require_out(ctx, "baseband table");
      const auto geometry = ArrayGeometry::pair_in_wavelengths(sim_spacing, wavelength(ctx.config));
      SourceScenario sc{sim_doa, sim_range, parse_snr(sim_snr), 0};
      sc.validate();
      const RealWaveform wave = add_awgn(synthesize_echo(sc, geometry, ctx.config), sc.snr_db, ctx.seed);
      const ComplexBaseband base = to_baseband(wave, ctx.config);

      auto f = open_text(path);
      f << "# t_s";
      for (std::size_t ch = 0; ch < base.channels; ++ch) f << " ch" << ch << "_re ch" << ch << "_im";
      f << '\n';
      for (std::size_t n = 0; n < base.samples_per_channel; ++n) {
        f << static_cast<double>(n) / base.sample_rate;
        for (std::size_t ch = 0; ch < base.channels; ++ch) f << ' ' << base.at(ch, n).real() << ' ' << base.at(ch, n).imag();
        f << '\n';
      }
      if (!sim_waveform.empty()) {
        auto w = open_text(sim_waveform);
        w << "# t_s";
        for (std::size_t ch = 0; ch < wave.channels; ++ch) w << " ch" << ch;
        w << '\n';
        for (std::size_t n = 0; n < wave.samples_per_channel; ++n) {
          w << static_cast<double>(n) / wave.sample_rate;
          for (std::size_t ch = 0; ch < wave.channels; ++ch) w << ' ' << wave.data[ch * wave.samples_per_channel + n];
          w << '\n';
        }
      }
      if (!sim_capture.empty()) {
        std::ostringstream note;
        note << std::setprecision(17) << "doa_deg=" << sc.doa_deg << ";range_m=" << sc.range_m << ";snr_db=" << sc.snr_db;
        ensure_parent(sim_capture);
        write_capture(capture_from_waveforms(std::span(&wave, 1), geometry, note.str()), sim_capture);
      }
      const DoaEstimate est = estimate_doa_music(base, geometry, ctx.config);
      if (!sim_spectrum.empty()) {
        const auto window = detect_echo_window(base, MusicOptions{}.detect);
        const auto [b0, b1] = snapshot_range(window, base.samples_per_channel, MusicOptions{}.min_snapshots);
        const auto vn = noise_subspace(covariance(SnapshotMatrix::from_window(base, b0, b1)));
        auto sp = open_text(sim_spectrum);
        write_pseudospectrum_table(pseudospectrum(vn, geometry, wavelength(ctx.config), MusicOptions{}.grid_step_deg, {}),
                                   sp);
      }
      out << estimate_json(est).dump(2) << '\n';
      return ok;
    }

    if (*dset) {
      const std::string path = require_out(ctx, "dataset file");
      ensure_parent(path);
      const SweepSpec spec = dset_args.spec(ctx);
      const Dataset ds = generate_dataset(spec, g.workers);
      ensure_parent(path);
      save_dataset(ds, path);
      if (!dset_index.empty()) {
        auto f = open_text(dset_index);
        write_dataset_index(ds, f);
      }
      out << "wrote " << ds.size() << " records to " << path << '\n';
      return ok;
    }

    if (*trn) {
      const std::string path = require_out(ctx, "checkpoint file");
      ensure_parent(path);
      const Dataset ds = load_dataset(trn_dataset);
      const TrainResult res = run_training(ds, trn_args, ctx);
      ensure_parent(path);
      save_checkpoint(res.checkpoint, path);
      write_history(res.history, trn_history.empty() ? path + ".history.csv" : trn_history);
      if (!trn_export.empty()) {
        auto f = open_text(trn_export);
        export_checkpoint_text(res.checkpoint, f);
      }
      out << "best epoch " << res.checkpoint.meta.best_epoch << " of " << res.checkpoint.meta.epochs_run
          << ", held-out loss " << res.checkpoint.meta.best_heldout_loss << ", " << res.skipped_records
          << " records without a detected echo skipped\n";
      return ok;
    }

    if (*evl) {
      const std::string path = require_out(ctx, "metrics table");
      ensure_parent(path);
      const TableFormat format = parse_format(evl_format);
      const Dataset ds = load_dataset(evl_dataset);
      std::vector<EstimatorEntry> estimators;
      if (!evl_no_music) {
        MusicOptions mo;
        mo.detect.threshold_factor = evl_threshold;
        estimators.push_back(EstimatorEntry::music(mo));
      }
      if (!evl_checkpoint.empty()) estimators.push_back(EstimatorEntry::network(load_checkpoint(evl_checkpoint)));
      require(!estimators.empty(), ErrorKind::invalid_argument, "eval: no estimator selected");
      std::vector<std::size_t> indices;
      if (evl_heldout) indices = split(ds, evl_fraction, evl_split_seed).test;
      const auto domains = parse_domains(evl_domains);
      MetricsTable table = evaluate(ds, estimators, domains, g.workers, indices);
      table.provenance["dataset"] = evl_dataset;
      if (!evl_checkpoint.empty()) table.provenance["checkpoint"] = evl_checkpoint;
      ensure_parent(path);
      emit_results(table, path, format);
      out << "wrote " << table.rows.size() << " rows to " << path << '\n';
      if (estimators.size() == 2) print_crossover(table, "network", "music", out);
      return ok;
    }

    if (*mus) {
      require(mus_capture.empty() != mus_dataset.empty(), ErrorKind::invalid_argument,
              "music: give exactly one of --capture or --dataset");
      ComplexBaseband base;
      ArrayGeometry geometry;
      SimConfig config = ctx.config;
      if (!mus_capture.empty()) {
        const CaptureFile cap = read_capture(mus_capture);
        geometry.element_x = cap.element_x;
        const auto records = ingest_capture(cap, geometry, config);
        require(mus_record < records.size(), ErrorKind::invalid_argument, "music: record index out of range");
        base = records[mus_record].payload;
      } else {
        const Dataset ds = load_dataset(mus_dataset);
        require(mus_record < ds.size(), ErrorKind::invalid_argument, "music: record index out of range");
        base = ds.records[mus_record].payload;
        geometry = ds.geometry;
        config = ds.config;
      }
      MusicOptions mo;
      mo.grid_step_deg = mus_step;
      const DoaEstimate est = estimate_doa_music(base, geometry, config, mo);
      if (!mus_spectrum.empty()) {
        const auto window = detect_echo_window(base, mo.detect);
        const auto [b0, b1] = snapshot_range(window, base.samples_per_channel, mo.min_snapshots);
        const auto vn = noise_subspace(covariance(SnapshotMatrix::from_window(base, b0, b1)));
        auto sp = open_text(mus_spectrum);
        write_pseudospectrum_table(pseudospectrum(vn, geometry, wavelength(config), mo.grid_step_deg, mo.domain), sp);
      }
      out << estimate_json(est).dump(2) << '\n';
      return ok;
    }

    if (*tri) {
      const RangeMeasurement m1{parse_point(tri_s1, "--s1"), tri_r1, tri_sigma};
      const RangeMeasurement m2{parse_point(tri_s2, "--s2"), tri_r2, tri_sigma};
      PositionFix fix;
      if (tri_doa) {
        DoaEstimate doa;
        doa.angle_deg = *tri_doa;
        doa.status = DoaStatus::converged;
        doa.ambiguity = {*tri_doa};
        fix = fuse_doa_with_ranges(doa, m1, m2, FusionOptions{tri_sigma_theta});
      } else {
        fix = triangulate(m1, m2);
      }
      const std::string text = fix_json(fix).dump(2);
      out << text << '\n';
      if (!g.out.empty()) open_text(g.out) << text << '\n';
      return ok;
    }

    if (*swp) {
      const fs::path dir = require_out(ctx, "result directory");
      const TableFormat format = parse_format(swp_format);
      fs::create_directories(dir);
      const SweepSpec spec = swp_sweep.spec(ctx);
      const Dataset ds = generate_dataset(spec, g.workers);
      out << "generated " << ds.size() << " records\n";
      if (swp_keep) save_dataset(ds, dir / "dataset.edds");
      const TrainResult res = run_training(ds, swp_train, ctx);
      save_checkpoint(res.checkpoint, dir / "checkpoint.edck");
      write_history(res.history, dir / "history.csv");
      const std::vector<EstimatorEntry> estimators{EstimatorEntry::music(), EstimatorEntry::network(res.checkpoint)};
      const std::vector<DomainTag> domains{DomainTag::full, DomainTag::inside30, DomainTag::outside30};
      MetricsTable table = evaluate(ds, estimators, domains, g.workers, res.split.test);
      table.provenance["seed"] = std::to_string(ctx.seed);
      const fs::path metrics = dir / (format == TableFormat::csv ? "metrics.csv" : "metrics.json");
      emit_results(table, metrics, format);
      out << "wrote " << metrics.string() << '\n';
      print_crossover(table, "network", "music", out);
      return ok;
    }

    if (*gck) {
      require(gck_seeds >= 1, ErrorKind::invalid_argument, "--seeds must be >= 1");
      bool all = true;
      double worst = 0.0;
      for (int k = 0; k < gck_seeds; ++k) {
        const std::uint64_t seed = ctx.seed + static_cast<std::uint64_t>(k);
        const GradCheckReport r = grad_check(NetworkSpec::reduced(), seed, gck_opts);
        out << "seed " << seed << ": max_relative_error=" << r.max_relative_error << " compared=" << r.compared
            << " below_floor=" << r.below_floor << " kinks_resampled=" << r.kinks_resampled
            << (r.passed ? " PASS" : " FAIL") << '\n';
        all = all && r.passed;
        worst = std::max(worst, r.max_relative_error);
      }
      out << "max relative error " << worst << (all ? " < " : " >= ") << gck_opts.tolerance << '\n';
      if (!all) {
        std::ostringstream msg;
        msg << "max relative error " << worst << " exceeds tolerance " << gck_opts.tolerance;
        return report(runtime_error, "gradient_mismatch", msg.str());
      }
      return ok;
    }
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return ok;
  } catch (const CLI::ParseError& e) {
    return report(usage_error, "usage", e.what());
  } catch (const Error& e) {
    switch (e.kind()) {
      case ErrorKind::invalid_argument:
      case ErrorKind::config:
      case ErrorKind::aperture_violation:
      case ErrorKind::scenario_out_of_window:
      case ErrorKind::incompatible_checkpoint:
      case ErrorKind::shape_mismatch:
      case ErrorKind::rate_mismatch:
        return report(validation_error, to_string(e.kind()), e.what());
      default:
        return report(runtime_error, to_string(e.kind()), e.what());
    }
  } catch (const std::exception& e) {
    return report(runtime_error, "internal", e.what());
  }
  return report(usage_error, "usage", "no subcommand given");
}

}  // namespace echodoa::cli
