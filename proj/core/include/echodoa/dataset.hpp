#pragma once

// Labeled simulated datasets: sweep generation, the EDDS binary container,
// stratified train/test splitting, and an auditing index export.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "echodoa/signal_sim.hpp"

namespace echodoa {

struct DatasetRecord {
  double doa_deg = 0.0;  ///< label (NaN when unlabeled)
  double snr_db = kNoiseless;
  double range_m = 0.0;
  std::uint64_t seed = 0;
  /// Detected time of flight in seconds, NaN when detection failed.
  double time_of_flight = std::numeric_limits<double>::quiet_NaN();
  ComplexBaseband payload;
};

struct Dataset {
  SimConfig config;
  ArrayGeometry geometry;
  std::size_t channels = 0;
  std::size_t samples_per_channel = 0;
  std::vector<DatasetRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  bool empty() const noexcept { return records.empty(); }
  /// Copy holding only the given records, in the given order.
  Dataset subset(std::span<const std::size_t> indices) const;
};

/// Inclusive grid min, min + step, ..., up to max (within 1e-9).
std::vector<double> angle_grid(double min_deg, double max_deg, double step_deg);

struct SweepSpec {
  std::vector<double> angles_deg = angle_grid(-60.0, 60.0, 10.0);
  std::vector<double> snrs_db = angle_grid(-30.0, 20.0, 5.0);
  int records_per_cell = 40;
  ArrayGeometry geometry;  ///< empty: half-wavelength pair from `config`
  SimConfig config{};
  double range_min_m = 0.5;
  double range_max_m = 1.25;
  double aperture_deg = 60.0;  ///< labels must satisfy |angle| <= aperture
  std::uint64_t master_seed = 1;
  DetectOptions detect{};

  /// Default sweep at the given element spacing (in wavelengths).
  static SweepSpec with_spacing(double spacing_wavelengths);
  ArrayGeometry resolved_geometry() const;
  void validate() const;
  std::size_t record_count() const;
};

/// |angles| x |snrs| x records_per_cell records in (angle, snr, repetition)
/// order. Output does not depend on `workers`.
Dataset generate_dataset(const SweepSpec& spec, unsigned workers = 1);

/// Per-record seed; a pure function of the master seed and cell indices.
std::uint64_t record_seed(std::uint64_t master_seed, std::size_t angle_index,
                          std::size_t snr_index, std::size_t repetition);

inline constexpr char kDatasetMagic[] = "EDDS";
inline constexpr std::uint8_t kDatasetVersion = 1;

std::vector<std::uint8_t> dataset_to_bytes(const Dataset& dataset);
Dataset dataset_from_bytes(std::span<const std::uint8_t> bytes);
void save_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct SplitIndices {
  std::vector<std::size_t> train;  ///< ascending
  std::vector<std::size_t> test;   ///< ascending
};

/// Stratified by (angle, SNR) cell: ceil(n * f) training records overall, and
/// every cell with >= 2 records lands in both partitions. Deterministic in seed.
SplitIndices split(const Dataset& dataset, double train_fraction, std::uint64_t seed);

/// CSV: index,doa_deg,snr_db,range_m,seed,time_of_flight_s
void write_dataset_index(const Dataset& dataset, std::ostream& out);

}  // namespace echodoa
