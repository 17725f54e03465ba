#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <unistd.h>

#include "echodoa/counter_rng.hpp"
#include "echodoa/error.hpp"
#include "echodoa/evaluation.hpp"

using namespace echodoa;
using doctest::Approx;

namespace {

MetricsTable curve(std::string id, double shift_db, std::vector<double> snrs) {
  MetricsTable t;
  for (double s : snrs) t.rows.push_back({s, id, DomainTag::full, std::max(0.5, 40.0 - 1.5 * (s - shift_db + 30.0)), 1.0, 0.0, 10});
  return t;
}

MetricsTable merged(const MetricsTable& a, const MetricsTable& b) {
  MetricsTable t = a;
  t.rows.insert(t.rows.end(), b.rows.begin(), b.rows.end());
  return t;
}

const std::vector<double> kSnrs = angle_grid(-30.0, 20.0, 5.0);

Dataset pure_noise(const std::vector<double>& labels) {
  Dataset ds;
  ds.config = SimConfig{};
  ds.geometry = ArrayGeometry::pair_in_wavelengths(0.5, wavelength(ds.config));
  ds.channels = 2;
  ds.samples_per_channel = 1000;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    DatasetRecord r;
    r.doa_deg = labels[i];
    r.snr_db = -30.0;
    r.payload.channels = 2;
    r.payload.samples_per_channel = 1000;
    r.payload.sample_rate = ds.config.baseband_rate();
    for (std::size_t n = 0; n < 2000; ++n)
      r.payload.data.emplace_back(normal_at(hash_key(i, n, 0)), normal_at(hash_key(i, n, 1)));
    ds.records.push_back(std::move(r));
  }
  return ds;
}

double spearman(std::vector<double> x, std::vector<double> y) {
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> idx(v.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t k = 0; k < idx.size(); ++k) r[idx[k]] = static_cast<double>(k);
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
  return 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
}

}  // namespace

TEST_CASE("domain tags") {
  CHECK(in_domain(DomainTag::full, 80.0));
  CHECK(in_domain(DomainTag::inside30, -30.0));
  CHECK_FALSE(in_domain(DomainTag::outside30, 30.0));
  CHECK(in_domain(DomainTag::outside30, -30.5));
  for (auto tag : {DomainTag::full, DomainTag::inside30, DomainTag::outside30})
    CHECK(parse_domain_tag(to_string(tag)) == tag);
  CHECK_THROWS_AS(parse_domain_tag("sideways"), Error);
}

TEST_CASE("snr_crossover") {
  SUBCASE("identical curves -> 0 dB") {
    const auto t = merged(curve("a", 0.0, kSnrs), curve("b", 0.0, kSnrs));
    CHECK(snr_crossover(t, "a", "b") == Approx(0.0));
  }
  SUBCASE("b shifted by +10 dB -> 10 dB") {
    const auto t = merged(curve("a", 0.0, kSnrs), curve("b", 10.0, kSnrs));
    CHECK(snr_crossover(t, "a", "b") == Approx(10.0));
    CHECK(snr_crossover(t, "b", "a") == Approx(-10.0));
  }
  SUBCASE("off-grid shift is interpolated") {
    const auto t = merged(curve("a", 0.0, kSnrs), curve("b", 7.5, kSnrs));
    CHECK(snr_crossover(t, "a", "b") == Approx(7.5));
  }
  SUBCASE("too few common SNR levels") {
    const auto t = merged(curve("a", 0.0, {-30.0, -25.0, -20.0}), curve("b", 0.0, {-30.0, -25.0, -20.0}));
    try {
      (void)snr_crossover(t, "a", "b");
      FAIL("expected non_overlapping_curves");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::non_overlapping_curves);
    }
  }
  SUBCASE("no common MAE range") {
    MetricsTable a = curve("a", 0.0, kSnrs);
    MetricsTable b = curve("b", 0.0, kSnrs);
    for (auto& r : b.rows) r.mae_deg += 100.0;
    try {
      (void)snr_crossover(merged(a, b), "a", "b");
      FAIL("expected non_overlapping_curves");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::non_overlapping_curves);
    }
  }
}

TEST_CASE("metrics tables round-trip") {
  const auto table = [] {
    MetricsTable t = merged(curve("music", 0.0, kSnrs), curve("network", -3.0, kSnrs));
    t.rows[3].mae_deg = 1.0 / 3.0;
    t.rows[4].median_deg = std::numeric_limits<double>::infinity();
    t.provenance["dataset"] = "sweep.edds";
    return t;
  }();

  SUBCASE("csv: 22 data rows + header, exact re-parse") {
    std::ostringstream out;
    write_metrics_csv(table, out);
    std::istringstream lines(out.str());
    std::string line;
    int data_rows = 0;
    bool header_seen = false;
    while (std::getline(lines, line)) {
      if (line.starts_with('#')) continue;
      if (!header_seen) {
        CHECK(line == kMetricsHeader);
        header_seen = true;
      } else {
        ++data_rows;
      }
    }
    CHECK(data_rows == 22);
    std::istringstream in(out.str());
    CHECK(read_metrics_csv(in) == table);
  }
  SUBCASE("json re-parse") {
    std::ostringstream out;
    write_metrics_json(table, out);
    std::istringstream in(out.str());
    CHECK(read_metrics_json(in) == table);
  }
  SUBCASE("empty table is header-only") {
    std::ostringstream out;
    write_metrics_csv(MetricsTable{}, out);
    CHECK(out.str() == std::string(kMetricsHeader) + "\n");
    std::istringstream in(out.str());
    CHECK(read_metrics_csv(in).rows.empty());
  }
  SUBCASE("files") {
    const auto dir = std::filesystem::temp_directory_path() / ("echodoa_eval_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    emit_results(table, dir / "m.csv", TableFormat::csv);
    emit_results(table, dir / "m.json", TableFormat::json);
    CHECK(load_results(dir / "m.csv", TableFormat::csv) == table);
    CHECK(load_results(dir / "m.json", TableFormat::json) == table);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("evaluate") {
  SUBCASE("noiseless MUSIC is exact to the grid step") {
    SweepSpec s;
    s.snrs_db = {kNoiseless};
    s.records_per_cell = 2;
    const Dataset ds = generate_dataset(s);
    const std::vector<EstimatorEntry> est{EstimatorEntry::music()};
    const auto table = evaluate(ds, est);
    REQUIRE(table.rows.size() == 1);
    CHECK(table.rows[0].mae_deg <= 0.25);
    CHECK(table.rows[0].fallback_rate == 0.0);
    CHECK(table.rows[0].n == 26);
  }
  SUBCASE("pure noise: every record falls back, MAE = mean |theta|") {
    const std::vector<double> labels{-60.0, -35.0, -10.0, 0.0, 15.0, 40.0, 55.0};
    const Dataset ds = pure_noise(labels);
    const std::vector<EstimatorEntry> est{EstimatorEntry::music()};
    const std::vector<DomainTag> domains{DomainTag::full, DomainTag::outside30};
    const auto table = evaluate(ds, est, domains);
    const auto* full = table.find(-30.0, "music", DomainTag::full);
    REQUIRE(full != nullptr);
    CHECK(full->fallback_rate == 1.0);
    CHECK(full->mae_deg == Approx(215.0 / 7.0));
    CHECK(full->n == 7);
    const auto* outside = table.find(-30.0, "music", DomainTag::outside30);
    REQUIRE(outside != nullptr);
    CHECK(outside->n == 4);
    CHECK(outside->mae_deg == Approx(190.0 / 4.0));
  }
  SUBCASE("a checkpoint for another channel count is rejected") {
    Checkpoint c;
    c.spec = NetworkSpec::linear_toy(6, 16);
    c.weights = {AlignedVector<double>(96, 0.0), {0.0}};
    const std::vector<EstimatorEntry> est{EstimatorEntry::network(c)};
    try {
      (void)evaluate(pure_noise({0.0}), est);
      FAIL("expected incompatible_checkpoint");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::incompatible_checkpoint);
    }
  }
}

TEST_CASE("MUSIC on the default SNR sweep") {
  SweepSpec s;
  s.records_per_cell = 16;  // 13 angles x 16 = 208 records per SNR level
  const Dataset ds = generate_dataset(s);
  const std::vector<EstimatorEntry> est{EstimatorEntry::music()};
  const auto table = evaluate(ds, est);
  REQUIRE(table.rows.size() == 11);
  std::vector<double> snr, mae;
  for (const auto& r : table.rows) {
    CHECK(r.n >= 200);
    snr.push_back(r.snr_db);
    mae.push_back(r.mae_deg);
  }
  CHECK(spearman(snr, mae) <= -0.8);
  CHECK(table.rows.front().fallback_rate > table.rows.back().fallback_rate);

  SUBCASE("pure and independent of the worker count") {
    CHECK(evaluate(ds, est, {}, 3) == table);
  }
}
