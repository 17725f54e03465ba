#include "echodoa/music.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <ostream>

#include <Eigen/Eigenvalues>

#include "echodoa/error.hpp"

namespace echodoa {
namespace {

constexpr double kDegPerRad = 180.0 / std::numbers::pi;

void normalize_phase(Eigen::Ref<Eigen::VectorXcd> v) {
  const double norm = v.norm();
  if (norm == 0.0) return;
  v /= norm;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v(i));
    if (mag > 1e-12) {
      v *= std::conj(v(i)) / mag;
      v(i) = cdouble{mag, 0.0};
      return;
    }
  }
}

NoiseSubspace closed_form_2x2(const CovarianceMatrix& r) {
  const double a = r(0, 0).real();
  const double c = r(1, 1).real();
  const cdouble b = 0.5 * (r(0, 1) + std::conj(r(1, 0)));
  const double mean = 0.5 * (a + c);
  const double half_diff = 0.5 * (a - c);
  const double radius = std::sqrt(half_diff * half_diff + std::norm(b));
  const double lambda_min = mean - radius;
  const double lambda_max = mean + radius;

  Eigen::Vector2cd v1(b, lambda_min - a);
  Eigen::Vector2cd v2(lambda_min - c, std::conj(b));
  const double scale = std::abs(a) + std::abs(c) + std::abs(b);
  Eigen::VectorXcd v;
  if (std::max(v1.norm(), v2.norm()) <= 1e-14 * scale || scale == 0.0) {
    v = Eigen::Vector2cd(0.0, 1.0);
  } else {
    v = (v1.norm() >= v2.norm()) ? Eigen::VectorXcd(v1) : Eigen::VectorXcd(v2);
  }
  normalize_phase(v);

  NoiseSubspace out;
  out.basis = v;
  out.eigenvalues = Eigen::Vector2d(lambda_min, lambda_max);
  out.gap_ratio = lambda_max > 0.0 ? std::clamp(lambda_min / lambda_max, 0.0, 1.0) : 1.0;
  return out;
}

// Prominence: height above the higher of the two lowest points reached on each
// side before meeting a higher sample. A side that runs straight into the grid
// edge contributes its own minimum; a peak sitting on the edge uses one side.
double prominence_at(const std::vector<double>& p, std::size_t i) {
  const double h = p[i];
  bool has_left = false, has_right = false;
  double left_min = h, right_min = h;
  for (std::size_t j = i; j-- > 0;) {
    if (p[j] > h) break;
    has_left = true;
    left_min = std::min(left_min, p[j]);
  }
  for (std::size_t j = i + 1; j < p.size(); ++j) {
    if (p[j] > h) break;
    has_right = true;
    right_min = std::min(right_min, p[j]);
  }
  double reference = 0.0;
  if (has_left && has_right) {
    reference = std::max(left_min, right_min);
  } else if (has_left) {
    reference = left_min;
  } else if (has_right) {
    reference = right_min;
  } else {
    reference = h;
  }
  return h - reference;
}

}  // namespace

std::string_view to_string(DoaStatus status) noexcept {
  return status == DoaStatus::converged ? "converged" : "fallback";
}

SnapshotMatrix SnapshotMatrix::from_window(const ComplexBaseband& base, std::size_t begin,
                                           std::size_t end) {
  require(begin <= end && end <= base.samples_per_channel, ErrorKind::invalid_argument,
          "SnapshotMatrix: window outside the record");
  SnapshotMatrix s;
  s.samples.resize(static_cast<Eigen::Index>(base.channels), static_cast<Eigen::Index>(end - begin));
  for (std::size_t ch = 0; ch < base.channels; ++ch)
    for (std::size_t k = begin; k < end; ++k)
      s.samples(static_cast<Eigen::Index>(ch), static_cast<Eigen::Index>(k - begin)) = base.at(ch, k);
  return s;
}

double Pseudospectrum::median_power() const {
  if (power.empty()) return 0.0;
  std::vector<double> tmp = power;
  const auto mid = tmp.begin() + static_cast<std::ptrdiff_t>(tmp.size() / 2);
  std::nth_element(tmp.begin(), mid, tmp.end());
  if (tmp.size() % 2 == 1) return *mid;
  return 0.5 * (*mid + *std::max_element(tmp.begin(), mid));
}

CovarianceMatrix covariance(const SnapshotMatrix& snapshots) {
  const auto m = snapshots.channels();
  const auto k = snapshots.snapshots();
  require(m >= 1 && k >= m, ErrorKind::too_few_snapshots,
          "covariance: need at least M snapshots (got " + std::to_string(k) + ")");
  require(snapshots.samples.allFinite(), ErrorKind::invalid_argument,
          "covariance: non-finite snapshot");
  CovarianceMatrix r = CovarianceMatrix::Zero(m, m);
  for (Eigen::Index col = 0; col < k; ++col) {
    const auto y = snapshots.samples.col(col);
    r.noalias() += y * y.adjoint();
  }
  r /= static_cast<double>(k);
  // exact Hermitian symmetry
  for (Eigen::Index i = 0; i < m; ++i) {
    r(i, i) = cdouble{r(i, i).real(), 0.0};
    for (Eigen::Index j = i + 1; j < m; ++j) r(j, i) = std::conj(r(i, j));
  }
  return r;
}

NoiseSubspace noise_subspace(const CovarianceMatrix& r, int sources) {
  require(r.rows() == r.cols() && r.rows() >= 2, ErrorKind::shape_mismatch,
          "noise_subspace: need a square matrix with M >= 2");
  require(sources >= 1 && sources < r.rows(), ErrorKind::invalid_argument,
          "noise_subspace: source count must satisfy 1 <= D < M");
  if (r.rows() == 2) return closed_form_2x2(r);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(r);
  require(solver.info() == Eigen::Success, ErrorKind::invalid_argument,
          "noise_subspace: eigendecomposition failed");
  const Eigen::Index noise_dim = r.rows() - sources;
  NoiseSubspace out;
  out.eigenvalues = solver.eigenvalues();
  out.basis = solver.eigenvectors().leftCols(noise_dim);
  for (Eigen::Index c = 0; c < noise_dim; ++c) normalize_phase(out.basis.col(c));
  const double lmax = out.eigenvalues(out.eigenvalues.size() - 1);
  out.gap_ratio = lmax > 0.0 ? std::clamp(out.eigenvalues(0) / lmax, 0.0, 1.0) : 1.0;
  return out;
}

Pseudospectrum pseudospectrum(const NoiseSubspace& vn, const ArrayGeometry& geometry,
                              double wavelength, double grid_step_deg, AngleDomain domain) {
  require(grid_step_deg > 0.0, ErrorKind::invalid_argument, "pseudospectrum: grid step must be > 0");
  require(domain.min_deg >= -90.0 && domain.max_deg <= 90.0 && domain.min_deg <= domain.max_deg,
          ErrorKind::invalid_argument, "pseudospectrum: domain must lie within [-90, 90]");
  require(vn.basis.rows() == static_cast<Eigen::Index>(geometry.size()), ErrorKind::shape_mismatch,
          "pseudospectrum: noise subspace does not match the array size");

  const auto n = static_cast<std::size_t>(
                     std::floor((domain.max_deg - domain.min_deg) / grid_step_deg + 1e-9)) + 1;
  Pseudospectrum out;
  out.angles_deg.resize(n);
  out.power.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = domain.min_deg + static_cast<double>(i) * grid_step_deg;
    const Eigen::VectorXcd a = steering_vector(geometry, theta, wavelength);
    const double num = a.squaredNorm();
    const double den = (vn.basis.adjoint() * a).squaredNorm();
    out.angles_deg[i] = theta;
    out.power[i] = num / std::max(den, 1e-12 * num);
  }

  // A grid edge counts as a peak only where the domain was truncated: at
  // +-90 deg sin(theta) is stationary, so endfire maxima are not directions.
  const auto& p = out.power;
  const bool open_left = domain.min_deg > -90.0;
  const bool open_right = domain.max_deg < 90.0;
  for (std::size_t i = 0; i < n; ++i) {
    const bool above_left = (i == 0) ? open_left : p[i] > p[i - 1];
    const bool above_right = (i + 1 == n) ? open_right : p[i] > p[i + 1];
    if (n > 1 && above_left && above_right)
      out.peaks.push_back({i, out.angles_deg[i], p[i], prominence_at(p, i)});
  }
  std::stable_sort(out.peaks.begin(), out.peaks.end(),
                   [](const SpectrumPeak& x, const SpectrumPeak& y) { return x.prominence > y.prominence; });
  return out;
}

std::vector<double> grating_lobe_set(double doa_deg, const ArrayGeometry& geometry,
                                     double wavelength) {
  require(std::abs(doa_deg) <= 90.0, ErrorKind::invalid_argument,
          "grating_lobe_set: doa_deg must lie in [-90, 90]");
  const double ratio = wavelength / geometry.spacing();
  const double s = std::sin(doa_deg / kDegPerRad);
  std::vector<double> out{doa_deg};
  const auto k_max = static_cast<long>(std::ceil(2.0 / ratio)) + 1;
  for (long k = -k_max; k <= k_max; ++k) {
    if (k == 0) continue;
    const double sk = s + static_cast<double>(k) * ratio;
    if (std::abs(sk) <= 1.0 + 1e-12) out.push_back(std::asin(std::clamp(sk, -1.0, 1.0)) * kDegPerRad);
  }
  std::sort(out.begin(), out.end());
  std::vector<double> merged;
  for (double v : out) {
    if (!merged.empty() && std::abs(v - merged.back()) <= 1e-9) {
      if (v == doa_deg) merged.back() = v;
      continue;
    }
    merged.push_back(v);
  }
  return merged;
}

std::pair<std::size_t, std::size_t> snapshot_range(const EchoWindow& window,
                                                   std::size_t record_length,
                                                   std::size_t min_snapshots) {
  std::size_t begin = window.begin;
  std::size_t end = std::min(window.end, record_length);
  if (end - begin >= min_snapshots || record_length <= min_snapshots) {
    if (record_length <= min_snapshots) return {0, record_length};
    return {begin, end};
  }
  const std::size_t center = (begin + end) / 2;
  begin = center >= min_snapshots / 2 ? center - min_snapshots / 2 : 0;
  end = begin + min_snapshots;
  if (end > record_length) {
    end = record_length;
    begin = end - min_snapshots;
  }
  return {begin, end};
}

DoaEstimate estimate_doa_music(const ComplexBaseband& base, const ArrayGeometry& geometry,
                               const SimConfig& config, const MusicOptions& options) {
  geometry.validate();
  require(base.channels == geometry.size(), ErrorKind::shape_mismatch,
          "estimate_doa_music: baseband channel count does not match the array");
  require(base.data.size() == base.channels * base.samples_per_channel, ErrorKind::shape_mismatch,
          "estimate_doa_music: malformed baseband");
  require(base.samples_per_channel >= base.channels, ErrorKind::too_few_snapshots,
          "estimate_doa_music: record shorter than the array size");

  EchoWindow window;
  try {
    window = detect_echo_window(base, options.detect);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::no_echo_found) return DoaEstimate::fallback();
    throw;
  }
  const auto [begin, end] = snapshot_range(window, base.samples_per_channel,
                                           std::max(options.min_snapshots, base.channels));
  const CovarianceMatrix r = covariance(SnapshotMatrix::from_window(base, begin, end));
  const NoiseSubspace vn = noise_subspace(r, 1);
  if (vn.gap_ratio > options.degeneracy_threshold) return DoaEstimate::fallback();

  const Pseudospectrum spectrum =
      pseudospectrum(vn, geometry, wavelength(config), options.grid_step_deg, options.domain);
  if (spectrum.peaks.empty()) return DoaEstimate::fallback();
  const SpectrumPeak& best = spectrum.peaks.front();
  if (!(best.prominence > options.prominence_factor * spectrum.median_power()))
    return DoaEstimate::fallback();

  DoaEstimate est;
  est.angle_deg = best.angle_deg;
  est.status = DoaStatus::converged;
  est.prominence = best.prominence;
  est.ambiguity = grating_lobe_set(best.angle_deg, geometry, wavelength(config));
  return est;
}

void write_pseudospectrum_table(const Pseudospectrum& spectrum, std::ostream& out) {
  out << "# angle_deg power\n" << std::setprecision(17);
  for (std::size_t i = 0; i < spectrum.power.size(); ++i)
    out << spectrum.angles_deg[i] << ' ' << spectrum.power[i] << '\n';
}

}  // namespace echodoa
