#include "echodoa/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>
#include <thread>

#include "echodoa/binary_io.hpp"
#include "echodoa/counter_rng.hpp"
#include "echodoa/error.hpp"

namespace echodoa {
namespace {

constexpr std::uint64_t kRangeStream = 0x72616e6765ULL;  // "range"

void write_sim_config(ByteWriter& w, const SimConfig& c) {
  w.f64(c.carrier_freq);
  w.f64(c.sound_speed);
  w.f64(c.sample_rate);
  w.f64(c.echo_duration);
  w.f64(c.listen_window);
  w.u32(static_cast<std::uint32_t>(c.decimation_factor));
  w.u64(c.rng_seed);
  w.u8(static_cast<std::uint8_t>(c.envelope));
}

SimConfig read_sim_config(ByteReader& r) {
  SimConfig c;
  c.carrier_freq = r.f64();
  c.sound_speed = r.f64();
  c.sample_rate = r.f64();
  c.echo_duration = r.f64();
  c.listen_window = r.f64();
  c.decimation_factor = static_cast<int>(r.u32());
  c.rng_seed = r.u64();
  const std::uint8_t env = r.u8();
  require(env <= 1, ErrorKind::version_mismatch, "unknown envelope code in dataset header");
  c.envelope = static_cast<EnvelopeShape>(env);
  return c;
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.config = config;
  out.geometry = geometry;
  out.channels = channels;
  out.samples_per_channel = samples_per_channel;
  out.records.reserve(indices.size());
  for (auto i : indices) {
    require(i < records.size(), ErrorKind::invalid_argument, "Dataset::subset: index out of range");
    out.records.push_back(records[i]);
  }
  return out;
}

std::vector<double> angle_grid(double min_deg, double max_deg, double step_deg) {
  require(step_deg > 0.0 && max_deg >= min_deg, ErrorKind::invalid_argument,
          "angle_grid: need step > 0 and max >= min");
  std::vector<double> out;
  const auto n = static_cast<std::size_t>(std::floor((max_deg - min_deg) / step_deg + 1e-9)) + 1;
  for (std::size_t i = 0; i < n; ++i) out.push_back(min_deg + static_cast<double>(i) * step_deg);
  return out;
}

SweepSpec SweepSpec::with_spacing(double spacing_wavelengths) {
  SweepSpec s;
  s.geometry = ArrayGeometry::pair_in_wavelengths(spacing_wavelengths, wavelength(s.config));
  return s;
}

ArrayGeometry SweepSpec::resolved_geometry() const {
  if (!geometry.element_x.empty()) return geometry;
  return ArrayGeometry::pair_in_wavelengths(0.5, wavelength(config));
}

void SweepSpec::validate() const {
  config.validate();
  resolved_geometry().validate();
  require(!angles_deg.empty() && !snrs_db.empty(), ErrorKind::invalid_argument,
          "SweepSpec: angle and SNR grids must be non-empty");
  require(records_per_cell >= 1, ErrorKind::invalid_argument, "SweepSpec: records_per_cell must be >= 1");
  require(aperture_deg > 0.0 && aperture_deg <= 90.0, ErrorKind::invalid_argument,
          "SweepSpec: aperture must lie in (0, 90]");
  for (double a : angles_deg)
    require(std::isfinite(a) && std::abs(a) <= aperture_deg, ErrorKind::aperture_violation,
            "SweepSpec: angle " + std::to_string(a) + " lies outside the +-" +
                std::to_string(aperture_deg) + " deg aperture");
  for (double s : snrs_db)
    require(!std::isnan(s) && s != -kNoiseless, ErrorKind::invalid_argument,
            "SweepSpec: SNR levels must be numbers (or the noiseless value)");
  require(range_min_m > 0.0 && range_max_m >= range_min_m, ErrorKind::invalid_argument,
          "SweepSpec: need 0 < range_min <= range_max");
}

std::size_t SweepSpec::record_count() const {
  return angles_deg.size() * snrs_db.size() * static_cast<std::size_t>(records_per_cell);
}

std::uint64_t record_seed(std::uint64_t master_seed, std::size_t angle_index, std::size_t snr_index,
                          std::size_t repetition) {
  return hash_key(master_seed, angle_index, snr_index, repetition);
}

Dataset generate_dataset(const SweepSpec& spec, unsigned workers) {
  spec.validate();
  const ArrayGeometry geometry = spec.resolved_geometry();
  Dataset out;
  out.config = spec.config;
  out.geometry = geometry;
  out.channels = geometry.size();
  out.samples_per_channel = spec.config.baseband_samples();
  out.records.resize(spec.record_count());

  const std::size_t n_snr = spec.snrs_db.size();
  const auto per_cell = static_cast<std::size_t>(spec.records_per_cell);

  auto make = [&](std::size_t index) {
    const std::size_t rep = index % per_cell;
    const std::size_t cell = index / per_cell;
    const std::size_t snr_i = cell % n_snr;
    const std::size_t angle_i = cell / n_snr;
    DatasetRecord rec;
    rec.doa_deg = spec.angles_deg[angle_i];
    rec.snr_db = spec.snrs_db[snr_i];
    rec.seed = record_seed(spec.master_seed, angle_i, snr_i, rep);
    rec.range_m = spec.range_min_m +
                  (spec.range_max_m - spec.range_min_m) * to_unit(hash_key(rec.seed, kRangeStream));
    const SourceScenario scenario{rec.doa_deg, rec.range_m, rec.snr_db, index};
    rec.payload = simulate_baseband(scenario, geometry, spec.config, rec.seed);
    try {
      rec.time_of_flight = detect_echo_window(rec.payload, spec.detect).time_of_flight;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::no_echo_found) throw;
    }
    out.records[index] = std::move(rec);
  };

  const std::size_t n = out.records.size();
  const unsigned n_workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(n)));
  if (n_workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) make(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(n_workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += n_workers) make(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<std::uint8_t> dataset_to_bytes(const Dataset& dataset) {
  ByteWriter w;
  w.tag(std::string_view(kDatasetMagic, 4));
  w.u8(kDatasetVersion);
  write_sim_config(w, dataset.config);
  w.u32(static_cast<std::uint32_t>(dataset.geometry.size()));
  for (double x : dataset.geometry.element_x) w.f64(x);
  w.u32(static_cast<std::uint32_t>(dataset.channels));
  w.u64(dataset.samples_per_channel);
  w.f64(dataset.records.empty() ? dataset.config.baseband_rate() : dataset.records.front().payload.sample_rate);
  w.u64(dataset.records.size());
  for (const auto& rec : dataset.records) {
    require(rec.payload.channels == dataset.channels &&
                rec.payload.samples_per_channel == dataset.samples_per_channel &&
                rec.payload.data.size() == dataset.channels * dataset.samples_per_channel,
            ErrorKind::shape_mismatch, "save_dataset: record payload shape differs from the dataset");
    w.f64(rec.doa_deg);
    w.f64(rec.snr_db);
    w.f64(rec.range_m);
    w.u64(rec.seed);
    w.f64(rec.time_of_flight);
    for (const auto& z : rec.payload.data) {
      w.f64(z.real());
      w.f64(z.imag());
    }
  }
  w.finish_with_crc();
  return w.take();
}

Dataset dataset_from_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader header(bytes);
  header.expect_tag(std::string_view(kDatasetMagic, 4));
  const std::uint8_t version = header.u8();
  require(version == kDatasetVersion, ErrorKind::version_mismatch,
          "dataset version " + std::to_string(version) + " is not supported");
  ByteReader r(verified_body(bytes));
  r.bytes(5);

  Dataset d;
  d.config = read_sim_config(r);
  const std::uint32_t m = r.u32();
  require(m <= 4096, ErrorKind::truncated, "implausible element count in dataset header");
  d.geometry.element_x.resize(m);
  for (auto& x : d.geometry.element_x) x = r.f64();
  d.channels = r.u32();
  d.samples_per_channel = r.u64();
  const double rate = r.f64();
  const std::uint64_t count = r.u64();
  const std::size_t values = d.channels * d.samples_per_channel;
  const std::size_t stride = 5 * 8 + values * 16;
  require(stride > 0 && r.remaining() == count * stride, ErrorKind::truncated,
          "dataset record block size does not match its header");
  d.records.resize(count);
  for (auto& rec : d.records) {
    rec.doa_deg = r.f64();
    rec.snr_db = r.f64();
    rec.range_m = r.f64();
    rec.seed = r.u64();
    rec.time_of_flight = r.f64();
    rec.payload.channels = d.channels;
    rec.payload.samples_per_channel = d.samples_per_channel;
    rec.payload.sample_rate = rate;
    rec.payload.data.resize(values);
    for (auto& z : rec.payload.data) {
      const double re = r.f64();
      const double im = r.f64();
      z = cdouble{re, im};
    }
  }
  return d;
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  write_file_bytes(path, dataset_to_bytes(dataset));
}

Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_bytes(read_file_bytes(path)); }

SplitIndices split(const Dataset& dataset, double train_fraction, std::uint64_t seed) {
  require(!dataset.empty(), ErrorKind::empty_dataset, "split: dataset is empty");
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::invalid_argument,
          "split: train fraction must lie in (0, 1)");

  // group by (angle, snr) cell, in order of first appearance
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::size_t> cell_of;
  std::vector<std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& rec = dataset.records[i];
    const auto key = std::make_pair(std::bit_cast<std::uint64_t>(rec.doa_deg),
                                    std::bit_cast<std::uint64_t>(rec.snr_db));
    auto [it, inserted] = cell_of.try_emplace(key, cells.size());
    if (inserted) cells.emplace_back();
    cells[it->second].push_back(i);
  }

  SplitMix64 rng(seed);
  for (auto& c : cells)
    for (std::size_t i = c.size(); i > 1; --i) std::swap(c[i - 1], c[rng.below(i)]);

  const std::size_t n = dataset.records.size();
  const auto target = static_cast<std::size_t>(std::ceil(static_cast<double>(n) * train_fraction - 1e-9));

  struct Quota {
    std::size_t take, lo, hi;
    double frac;
    std::uint64_t tie;
  };
  std::vector<Quota> quota(cells.size());
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    const std::size_t size = cells[c].size();
    const double ideal = static_cast<double>(size) * train_fraction;
    const std::size_t lo = size >= 2 ? 1 : 0;
    const std::size_t hi = size >= 2 ? size - 1 : size;
    const auto base = std::clamp(static_cast<std::size_t>(std::floor(ideal)), lo, hi);
    quota[c] = {base, lo, hi, ideal - static_cast<double>(base), rng()};
    assigned += base;
  }

  std::vector<std::size_t> order(cells.size());
  for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (quota[a].frac != quota[b].frac) return quota[a].frac > quota[b].frac;
    return quota[a].tie < quota[b].tie;
  });
  // Largest remainder first. Keeping every multi-record cell in both
  // partitions takes precedence: with very small cells the total can then
  // miss ceil(n f).
  for (int relaxed = 0; relaxed < 1 && assigned != target; ++relaxed) {
    bool progress = true;
    while (assigned < target && progress) {
      progress = false;
      for (std::size_t c : order) {
        const std::size_t cap = relaxed ? cells[c].size() : quota[c].hi;
        if (assigned < target && quota[c].take < cap) {
          ++quota[c].take;
          ++assigned;
          progress = true;
        }
      }
    }
    progress = true;
    while (assigned > target && progress) {
      progress = false;
      for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const std::size_t floor_take = relaxed ? 0 : quota[*it].lo;
        if (assigned > target && quota[*it].take > floor_take) {
          --quota[*it].take;
          --assigned;
          progress = true;
        }
      }
    }
  }

  SplitIndices out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t k = 0; k < cells[c].size(); ++k)
      (k < quota[c].take ? out.train : out.test).push_back(cells[c][k]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  return out;
}

void write_dataset_index(const Dataset& dataset, std::ostream& out) {
  out << "index,doa_deg,snr_db,range_m,seed,time_of_flight_s\n" << std::setprecision(17);
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    out << i << ',' << r.doa_deg << ',' << r.snr_db << ',' << r.range_m << ',' << r.seed << ','
        << r.time_of_flight << '\n';
  }
}

}  // namespace echodoa
