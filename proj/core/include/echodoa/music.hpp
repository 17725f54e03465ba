#pragma once

// MUSIC direction-of-arrival estimation for a small linear array, plus the
// grating-lobe ambiguity set for spacings above half a wavelength.

#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "echodoa/doa_estimate.hpp"
#include "echodoa/signal_sim.hpp"

namespace echodoa {

/// M channels x K snapshots.
struct SnapshotMatrix {
  Eigen::MatrixXcd samples;

  /// Columns [begin, end) of the baseband record.
  static SnapshotMatrix from_window(const ComplexBaseband& base, std::size_t begin,
                                    std::size_t end);

  Eigen::Index channels() const noexcept { return samples.rows(); }
  Eigen::Index snapshots() const noexcept { return samples.cols(); }
};

using CovarianceMatrix = Eigen::MatrixXcd;

struct NoiseSubspace {
  Eigen::MatrixXcd basis;        ///< M x (M - D), orthonormal columns
  Eigen::VectorXd eigenvalues;   ///< all M eigenvalues, ascending
  double gap_ratio = 1.0;        ///< lambda_min / lambda_max, in [0, 1]
};

struct AngleDomain {
  double min_deg = -90.0;
  double max_deg = 90.0;
};

struct SpectrumPeak {
  std::size_t index = 0;
  double angle_deg = 0.0;
  double value = 0.0;
  double prominence = 0.0;
};

struct Pseudospectrum {
  std::vector<double> angles_deg;  ///< uniform grid
  std::vector<double> power;
  std::vector<SpectrumPeak> peaks;  ///< sorted by descending prominence

  double median_power() const;
};

/// R = (1/K) sum_k y_k y_k^H. Throws too_few_snapshots when K < M.
CovarianceMatrix covariance(const SnapshotMatrix& snapshots);

/// Eigenvectors of the M - sources smallest eigenvalues. Uses the closed form for
/// 2x2 input. Each column is phase-normalized so its first nonzero entry is real
/// and positive; an exact eigenvalue tie on a 2x2 diagonal returns [0, 1].
NoiseSubspace noise_subspace(const CovarianceMatrix& r, int sources = 1);

/// P(theta) = a^H a / (a^H Vn Vn^H a) on a uniform grid, denominator floored at
/// 1e-12 of the numerator.
Pseudospectrum pseudospectrum(const NoiseSubspace& vn, const ArrayGeometry& geometry,
                              double wavelength, double grid_step_deg,
                              AngleDomain domain = {});

/// All theta' in [-90, 90] with sin(theta') = sin(theta) + k lambda / d, sorted.
std::vector<double> grating_lobe_set(double doa_deg, const ArrayGeometry& geometry,
                                     double wavelength);

struct MusicOptions {
  double grid_step_deg = 0.25;
  AngleDomain domain{};
  /// A peak must exceed prominence_factor * median(P) to count as converged.
  double prominence_factor = 3.0;
  DetectOptions detect{};
  std::size_t min_snapshots = 16;
  double degeneracy_threshold = 1.0 - 1e-9;
};

/// Full pipeline from a baseband record. Estimation failures come back as a
/// fallback estimate (0 deg); only malformed input throws.
DoaEstimate estimate_doa_music(const ComplexBaseband& base, const ArrayGeometry& geometry,
                               const SimConfig& config, const MusicOptions& options = {});

/// Snapshot columns for a detected window, widened symmetrically to at least
/// `min_snapshots` samples (clipped to the record).
std::pair<std::size_t, std::size_t> snapshot_range(const EchoWindow& window,
                                                   std::size_t record_length,
                                                   std::size_t min_snapshots);

/// Two whitespace-separated columns: angle_deg power.
void write_pseudospectrum_table(const Pseudospectrum& spectrum, std::ostream& out);

}  // namespace echodoa
