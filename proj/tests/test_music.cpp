#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

#include "echodoa/counter_rng.hpp"
#include "echodoa/error.hpp"
#include "echodoa/music.hpp"

using namespace echodoa;
using doctest::Approx;
using cd = std::complex<double>;

namespace {

const SimConfig kConfig{};
const double kLambda = wavelength(kConfig);
const cd I{0.0, 1.0};

ArrayGeometry spacing(double wavelengths) { return ArrayGeometry::pair_in_wavelengths(wavelengths, kLambda); }

SnapshotMatrix rank_one(const ArrayGeometry& g, double theta, int k = 32) {
  const auto a = steering_vector(g, theta, kLambda);
  SnapshotMatrix s;
  s.samples.resize(2, k);
  for (int n = 0; n < k; ++n) s.samples.col(n) = a * std::polar(1.0, 0.37 * n);
  return s;
}

std::vector<double> local_maxima(const Pseudospectrum& p) {
  std::vector<double> out;
  for (const auto& peak : p.peaks) out.push_back(peak.angle_deg);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST_CASE("covariance") {
  SUBCASE("repeated [1, -i] s snapshot") {
    SnapshotMatrix s;
    s.samples.resize(2, 8);
    for (int n = 0; n < 8; ++n) {
      const cd phase = std::polar(1.0, 0.9 * n);
      s.samples(0, n) = phase;
      s.samples(1, n) = -I * phase;
    }
    const auto r = covariance(s);
    CHECK(std::abs(r(0, 0) - 1.0) < 1e-12);
    CHECK(std::abs(r(0, 1) - I) < 1e-12);
    CHECK(std::abs(r(1, 0) + I) < 1e-12);
    CHECK(std::abs(r(1, 1) - 1.0) < 1e-12);
  }
  SUBCASE("zero snapshots give the zero matrix") {
    SnapshotMatrix s;
    s.samples = Eigen::MatrixXcd::Zero(2, 4);
    CHECK(covariance(s).norm() == 0.0);
  }
  SUBCASE("white noise is close to sigma^2 I") {
    const double sigma2 = 2.5;
    SnapshotMatrix s;
    s.samples.resize(2, 10000);
    for (int n = 0; n < 10000; ++n)
      for (int m = 0; m < 2; ++m) {
        const double re = normal_at(hash_key(5, m, n, 0)), im = normal_at(hash_key(5, m, n, 1));
        s.samples(m, n) = std::sqrt(sigma2 / 2.0) * cd(re, im);
      }
    const auto r = covariance(s);
    CHECK(r(0, 0).real() == Approx(sigma2).epsilon(0.05));
    CHECK(r(1, 1).real() == Approx(sigma2).epsilon(0.05));
    CHECK(std::abs(r(0, 1)) < 0.05 * sigma2);
    CHECK((r - r.adjoint()).norm() < 1e-12);
  }
  SUBCASE("fewer snapshots than channels") {
    SnapshotMatrix s;
    s.samples = Eigen::MatrixXcd::Ones(2, 1);
    try {
      (void)covariance(s);
      FAIL("expected too_few_snapshots");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::too_few_snapshots);
    }
  }
}

TEST_CASE("noise_subspace") {
  SUBCASE("rank-one [1, -i] covariance -> [1, i] / sqrt 2") {
    Eigen::MatrixXcd r(2, 2);
    r << 1.0, I, -I, 1.0;
    const auto vn = noise_subspace(r);
    REQUIRE(vn.basis.cols() == 1);
    CHECK(std::abs(vn.basis(0, 0) - 1.0 / std::sqrt(2.0)) < 1e-12);
    CHECK(std::abs(vn.basis(1, 0) - I / std::sqrt(2.0)) < 1e-12);
    CHECK(vn.gap_ratio < 1e-10);
  }
  SUBCASE("diag(2, 1) -> [0, 1]") {
    Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(2, 2);
    r(0, 0) = 2.0;
    r(1, 1) = 1.0;
    const auto vn = noise_subspace(r);
    CHECK(std::abs(vn.basis(0, 0)) < 1e-15);
    CHECK(vn.basis(1, 0) == cd(1.0, 0.0));
    CHECK(vn.eigenvalues(0) == Approx(1.0));
    CHECK(vn.eigenvalues(1) == Approx(2.0));
  }
  SUBCASE("identity -> gap ratio 1 and the [0, 1] tie-break") {
    const auto vn = noise_subspace(Eigen::MatrixXcd::Identity(2, 2));
    CHECK(vn.gap_ratio == 1.0);
    CHECK(vn.basis(0, 0) == cd(0.0, 0.0));
    CHECK(vn.basis(1, 0) == cd(1.0, 0.0));
  }
  SUBCASE("orthogonal to the true steering vector") {
    for (double theta : {-60.0, -12.5, 0.0, 30.0, 47.0}) {
      const auto vn = noise_subspace(covariance(rank_one(spacing(0.5), theta)));
      const auto a = steering_vector(spacing(0.5), theta, kLambda);
      CHECK(std::abs((a.adjoint() * vn.basis)(0, 0)) < 1e-6);
      CHECK(std::abs(vn.basis.col(0).norm() - 1.0) < 1e-10);
      CHECK(vn.basis(0, 0).imag() == 0.0);
      CHECK(vn.basis(0, 0).real() >= 0.0);
    }
  }
}

TEST_CASE("pseudospectrum") {
  Eigen::MatrixXcd vn_basis(2, 1);
  vn_basis << 1.0 / std::sqrt(2.0), I / std::sqrt(2.0);
  NoiseSubspace vn{vn_basis, Eigen::Vector2d(0.0, 2.0), 0.0};

  SUBCASE("global maximum at 30 deg for half-wavelength spacing") {
    const auto p = pseudospectrum(vn, spacing(0.5), kLambda, 0.25);
    CHECK(p.angles_deg.size() == 721);
    CHECK(p.angles_deg.front() == -90.0);
    CHECK(p.angles_deg.back() == 90.0);
    const auto best = std::max_element(p.power.begin(), p.power.end()) - p.power.begin();
    CHECK(std::abs(p.angles_deg[static_cast<std::size_t>(best)] - 30.0) <= 0.25);
    REQUIRE(!p.peaks.empty());
    CHECK(std::abs(p.peaks.front().angle_deg - 30.0) <= 0.25);
  }
  SUBCASE("-90 deg is finite and far below the peak") {
    // a(-90) = [1, -1]; |a^H vn|^2 = |1 - i|^2 / 2 = 1, so P = 2.
    const auto p = pseudospectrum(vn, spacing(0.5), kLambda, 0.25);
    CHECK(p.power.front() == Approx(2.0).epsilon(1e-9));
    CHECK(p.power.front() < 1e-6 * *std::max_element(p.power.begin(), p.power.end()));
  }
  SUBCASE("1.5 wavelengths: the grating triplet") {
    const auto g = spacing(1.5);
    const auto p = pseudospectrum(noise_subspace(covariance(rank_one(g, 30.0))), g, kLambda, 0.25);
    const auto maxima = local_maxima(p);
    REQUIRE(maxima.size() == 3);
    CHECK(std::abs(maxima[0] + 56.443) <= 0.5);
    CHECK(std::abs(maxima[1] + 9.594) <= 0.5);
    CHECK(std::abs(maxima[2] - 30.0) <= 0.5);
  }
  SUBCASE("mirror symmetry for conjugated snapshots") {
    const auto g = spacing(0.5);
    auto plus = rank_one(g, 22.0);
    SnapshotMatrix minus{plus.samples.conjugate()};
    const auto pp = pseudospectrum(noise_subspace(covariance(plus)), g, kLambda, 0.25);
    const auto pm = pseudospectrum(noise_subspace(covariance(minus)), g, kLambda, 0.25);
    const std::size_t n = pp.power.size();
    for (std::size_t i = 0; i < n; ++i)
      CHECK(std::abs(pp.power[i] - pm.power[n - 1 - i]) <= 1e-9 * std::max(1.0, pp.power[i]));
  }
  SUBCASE("two-column text export") {
    const auto p = pseudospectrum(vn, spacing(0.5), kLambda, 45.0);
    std::ostringstream out;
    write_pseudospectrum_table(p, out);
    std::istringstream in(out.str());
    std::string header;
    std::getline(in, header);
    CHECK(header.starts_with('#'));
    double angle = 0.0, power = 0.0;
    int rows = 0;
    while (in >> angle >> power) ++rows;
    CHECK(rows == 5);
  }
}

TEST_CASE("grating_lobe_set") {
  auto close = [](const std::vector<double>& got, std::vector<double> want) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == Approx(want[i]).epsilon(1e-5));
  };
  close(grating_lobe_set(30.0, spacing(0.5), kLambda), {30.0});
  close(grating_lobe_set(30.0, spacing(1.5), kLambda), {-56.443, -9.594, 30.0});
  const auto zero = grating_lobe_set(0.0, spacing(1.5), kLambda);
  REQUIRE(zero.size() == 3);
  CHECK(zero[0] == Approx(-41.810).epsilon(1e-5));
  CHECK(std::abs(zero[1]) < 1e-12);
  CHECK(zero[2] == Approx(41.810).epsilon(1e-5));

  SUBCASE("every member maps to the same set") {
    for (double theta : {-70.0, -20.0, 5.0, 30.0, 64.0}) {
      const auto set = grating_lobe_set(theta, spacing(1.5), kLambda);
      for (double member : set) {
        const auto again = grating_lobe_set(member, spacing(1.5), kLambda);
        REQUIRE(again.size() == set.size());
        for (std::size_t i = 0; i < set.size(); ++i) CHECK(std::abs(again[i] - set[i]) < 1e-9);
      }
    }
  }
}

TEST_CASE("estimate_doa_music") {
  SUBCASE("noiseless 30 deg at half wavelength") {
    const auto b = simulate_baseband({30.0, 0.68, kNoiseless, 0}, spacing(0.5), kConfig, 0);
    const auto est = estimate_doa_music(b, spacing(0.5), kConfig);
    CHECK(est.converged());
    CHECK(std::abs(est.angle_deg - 30.0) <= 0.25);
    CHECK(est.ambiguity.size() == 1);
  }
  SUBCASE("noiseless 30 deg at 1.5 wavelengths reports the triplet") {
    const auto g = spacing(1.5);
    const auto est = estimate_doa_music(simulate_baseband({30.0, 0.68, kNoiseless, 0}, g, kConfig, 0), g, kConfig);
    CHECK(est.converged());
    REQUIRE(est.ambiguity.size() == 3);
    CHECK(std::abs(est.ambiguity[0] + 56.443) <= 0.25);
    CHECK(std::abs(est.ambiguity[1] + 9.594) <= 0.25);
    CHECK(std::abs(est.ambiguity[2] - 30.0) <= 0.25);
    CHECK(std::find(est.ambiguity.begin(), est.ambiguity.end(), est.angle_deg) != est.ambiguity.end());
  }
  SUBCASE("pure noise falls back to 0") {
    ComplexBaseband b;
    b.channels = 2;
    b.samples_per_channel = 1000;
    b.sample_rate = kConfig.baseband_rate();
    for (std::size_t n = 0; n < 2000; ++n) b.data.emplace_back(normal_at(hash_key(3, n, 0)), normal_at(hash_key(3, n, 1)));
    const auto est = estimate_doa_music(b, spacing(0.5), kConfig);
    CHECK(est.status == DoaStatus::fallback);
    CHECK(est.angle_deg == 0.0);
  }
  SUBCASE("all-zero record falls back to 0") {
    ComplexBaseband b;
    b.channels = 2;
    b.samples_per_channel = 1000;
    b.sample_rate = kConfig.baseband_rate();
    b.data.assign(2000, {});
    CHECK(estimate_doa_music(b, spacing(0.5), kConfig).status == DoaStatus::fallback);
  }
}

TEST_CASE("snapshot_range widens short windows") {
  const auto [b, e] = snapshot_range(EchoWindow{500, 505, 0.0}, 1000, 16);
  CHECK(e - b == 16);
  CHECK(b <= 500);
  CHECK(e >= 505);
  const auto [b2, e2] = snapshot_range(EchoWindow{2, 4, 0.0}, 1000, 16);
  CHECK(b2 == 0);
  CHECK(e2 == 16);
}
