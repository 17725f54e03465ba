#include "echodoa/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "echodoa/error.hpp"
#include "echodoa/config_file.hpp"
#include "echodoa/training.hpp"

namespace echodoa {

std::string_view to_string(DomainTag tag) noexcept {
  switch (tag) {
    case DomainTag::full: return "full";
    case DomainTag::inside30: return "inside30";
    case DomainTag::outside30: return "outside30";
  }
  return "full";
}

DomainTag parse_domain_tag(std::string_view text) {
  if (text == "full") return DomainTag::full;
  if (text == "inside30") return DomainTag::inside30;
  if (text == "outside30") return DomainTag::outside30;
  fail(ErrorKind::invalid_argument, "unknown domain tag '" + std::string(text) + "'");
}

bool in_domain(DomainTag tag, double doa_deg) noexcept {
  switch (tag) {
    case DomainTag::full: return true;
    case DomainTag::inside30: return std::abs(doa_deg) <= 30.0;
    case DomainTag::outside30: return std::abs(doa_deg) > 30.0;
  }
  return true;
}

const MetricsRow* MetricsTable::find(double snr_db, std::string_view estimator, DomainTag domain) const {
  for (const auto& r : rows)
    if (r.snr_db == snr_db && r.estimator == estimator && r.domain == domain) return &r;
  return nullptr;
}

EstimatorEntry EstimatorEntry::music(MusicOptions options, std::string id) {
  return {std::move(id), std::move(options)};
}

EstimatorEntry EstimatorEntry::network(Checkpoint checkpoint, std::string id) {
  return {std::move(id), std::move(checkpoint)};
}

std::vector<DoaEstimate> estimate_records(const Dataset& dataset, const EstimatorEntry& estimator,
                                          unsigned workers) {
  std::optional<NeuralEstimator> neural;
  if (const auto* ck = std::get_if<Checkpoint>(&estimator.method)) {
    neural.emplace(*ck);
    require(static_cast<std::size_t>(neural->spec().input_rows) == 2 * dataset.channels,
            ErrorKind::incompatible_checkpoint,
            "estimator '" + estimator.id + "' expects " + std::to_string(neural->spec().input_rows / 2) +
                " channels, dataset has " + std::to_string(dataset.channels));
  }
  const auto* music = std::get_if<MusicOptions>(&estimator.method);

  const std::size_t n = dataset.size();
  std::vector<DoaEstimate> out(n);
  auto run = [&](std::size_t i) {
    const auto& base = dataset.records[i].payload;
    out[i] = music ? estimate_doa_music(base, dataset.geometry, dataset.config, *music) : neural->estimate(base);
  };

  const unsigned n_workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (n_workers == 1) {
    for (std::size_t i = 0; i < n; ++i) run(i);
    return out;
  }
  std::vector<std::exception_ptr> errors(n_workers);
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < n_workers; ++w)
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = w; i < n; i += n_workers) run(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

MetricsTable tabulate(const Dataset& dataset, std::span<const std::string> estimator_ids,
                      std::span<const std::vector<DoaEstimate>> estimates, std::span<const DomainTag> domains,
                      std::span<const std::size_t> indices) {
  require(estimator_ids.size() == estimates.size(), ErrorKind::shape_mismatch,
          "tabulate: one estimate list per estimator required");
  for (const auto& e : estimates)
    require(e.size() == dataset.size(), ErrorKind::shape_mismatch, "tabulate: estimates do not cover the dataset");
  const DomainTag full[] = {DomainTag::full};
  if (domains.empty()) domains = full;

  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(dataset.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    indices = all;
  }

  std::vector<double> snrs;
  for (std::size_t i : indices) {
    require(i < dataset.size(), ErrorKind::invalid_argument, "tabulate: record index out of range");
    require(std::isfinite(dataset.records[i].doa_deg), ErrorKind::invalid_argument,
            "evaluate: record " + std::to_string(i) + " has no DoA label");
    snrs.push_back(dataset.records[i].snr_db);
  }
  std::sort(snrs.begin(), snrs.end());
  snrs.erase(std::unique(snrs.begin(), snrs.end()), snrs.end());

  MetricsTable table;
  for (double snr : snrs)
    for (std::size_t e = 0; e < estimator_ids.size(); ++e)
      for (DomainTag d : domains) {
        std::vector<double> errors;
        std::size_t fallbacks = 0;
        for (std::size_t i : indices) {
          const auto& rec = dataset.records[i];
          if (rec.snr_db != snr || !in_domain(d, rec.doa_deg)) continue;
          const auto& est = estimates[e][i];
          errors.push_back(std::abs(est.angle_deg - rec.doa_deg));
          if (!est.converged()) ++fallbacks;
        }
        if (errors.empty()) continue;
        MetricsRow row;
        row.snr_db = snr;
        row.estimator = estimator_ids[e];
        row.domain = d;
        double sum = 0.0;
        for (double x : errors) sum += x;
        row.n = errors.size();
        row.mae_deg = sum / static_cast<double>(row.n);
        row.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(row.n);
        row.median_deg = median_of(std::move(errors));
        table.rows.push_back(std::move(row));
      }
  return table;
}

MetricsTable evaluate(const Dataset& dataset, std::span<const EstimatorEntry> estimators,
                      std::span<const DomainTag> domains, unsigned workers, std::span<const std::size_t> indices) {
  std::vector<std::string> ids;
  std::vector<std::vector<DoaEstimate>> estimates;
  for (const auto& e : estimators) {
    require(std::find(ids.begin(), ids.end(), e.id) == ids.end(), ErrorKind::invalid_argument,
            "evaluate: duplicate estimator id '" + e.id + "'");
    ids.push_back(e.id);
    estimates.push_back(estimate_records(dataset, e, workers));
  }
  MetricsTable table = tabulate(dataset, ids, estimates, domains, indices);
  table.provenance["records"] = std::to_string(indices.empty() ? dataset.size() : indices.size());
  for (const auto& e : estimators) {
    std::ostringstream desc;
    if (const auto* m = std::get_if<MusicOptions>(&e.method)) {
      desc << "music grid_step_deg=" << m->grid_step_deg << " prominence_factor=" << m->prominence_factor
           << " threshold_factor=" << m->detect.threshold_factor;
    } else {
      const auto& ck = std::get<Checkpoint>(e.method);
      desc << "network T=" << ck.spec.input_length << " seed=" << ck.meta.seed << " best_epoch=" << ck.meta.best_epoch
           << " threshold_factor=" << ck.prep.detect.threshold_factor;
    }
    table.provenance["estimator." + e.id] = desc.str();
  }
  return table;
}

namespace {

struct Curve {
  std::vector<double> snr;
  std::vector<double> mae;
};

Curve curve_of(const MetricsTable& table, std::string_view estimator, DomainTag domain) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : table.rows)
    if (r.estimator == estimator && r.domain == domain && std::isfinite(r.snr_db)) pts.emplace_back(r.snr_db, r.mae_deg);
  std::sort(pts.begin(), pts.end());
  Curve c;
  for (auto [s, m] : pts) {
    c.snr.push_back(s);
    c.mae.push_back(m);
  }
  return c;
}

}  // namespace

double snr_crossover(const MetricsTable& table, std::string_view estimator_a, std::string_view estimator_b,
                     DomainTag domain) {
  const Curve a = curve_of(table, estimator_a, domain);
  Curve b = curve_of(table, estimator_b, domain);
  std::size_t common = 0;
  for (double s : a.snr)
    if (std::find(b.snr.begin(), b.snr.end(), s) != b.snr.end()) ++common;
  require(common >= 4, ErrorKind::non_overlapping_curves,
          "snr_crossover: need at least 4 common SNR levels, found " + std::to_string(common));

  // Monotone (non-increasing in SNR) version of b's curve.
  for (std::size_t i = 1; i < b.mae.size(); ++i) b.mae[i] = std::min(b.mae[i], b.mae[i - 1]);

  std::vector<double> shifts;
  for (std::size_t j = 0; j < a.snr.size(); ++j) {
    const double level = a.mae[j];
    if (level > b.mae.front() || level < b.mae.back()) continue;
    std::size_t i = 0;
    while (b.mae[i] > level) ++i;  // first point at or below the level
    double s;
    if (i == 0 || b.mae[i] == level) {
      s = b.snr[i];
    } else {
      const double t = (b.mae[i - 1] - level) / (b.mae[i - 1] - b.mae[i]);
      s = b.snr[i - 1] + t * (b.snr[i] - b.snr[i - 1]);
    }
    shifts.push_back(s - a.snr[j]);
  }
  require(!shifts.empty(), ErrorKind::non_overlapping_curves,
          "snr_crossover: the two error curves share no MAE range");
  return median_of(std::move(shifts));
}

namespace {

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_number(const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  require(!text.empty() && end == text.c_str() + text.size(), ErrorKind::invalid_argument,
          "metrics table: bad number '" + text + "'");
  return v;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

void write_metrics_csv(const MetricsTable& table, std::ostream& out) {
  for (const auto& [k, v] : table.provenance) out << "# " << k << '=' << v << '\n';
  out << kMetricsHeader << '\n';
  for (const auto& r : table.rows) {
    out << format_number(r.snr_db) << ',' << r.estimator << ',' << to_string(r.domain) << ','
        << format_number(r.mae_deg) << ',' << format_number(r.median_deg) << ',' << format_number(r.fallback_rate)
        << ',' << r.n << '\n';
  }
}

MetricsTable read_metrics_csv(std::istream& in) {
  MetricsTable table;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# ", 0) == 0) {
      const auto eq = line.find('=');
      require(eq != std::string::npos, ErrorKind::invalid_argument, "metrics table: bad provenance line");
      table.provenance[line.substr(2, eq - 2)] = line.substr(eq + 1);
      continue;
    }
    if (!header) {
      require(line == kMetricsHeader, ErrorKind::invalid_argument, "metrics table: unexpected header '" + line + "'");
      header = true;
      continue;
    }
    const auto f = split_fields(line);
    require(f.size() == 7, ErrorKind::invalid_argument, "metrics table: expected 7 fields in '" + line + "'");
    MetricsRow r;
    r.snr_db = parse_number(f[0]);
    r.estimator = f[1];
    r.domain = parse_domain_tag(f[2]);
    r.mae_deg = parse_number(f[3]);
    r.median_deg = parse_number(f[4]);
    r.fallback_rate = parse_number(f[5]);
    r.n = static_cast<std::size_t>(parse_integer("n", f[6]));
    table.rows.push_back(std::move(r));
  }
  require(header, ErrorKind::invalid_argument, "metrics table: missing header");
  return table;
}

void write_metrics_json(const MetricsTable& table, std::ostream& out) {
  nlohmann::ordered_json j;
  j["provenance"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : table.provenance) j["provenance"][k] = v;
  j["rows"] = nlohmann::ordered_json::array();
  // Numbers as 17-digit strings when not finite; JSON has no infinity.
  auto num = [](double v) -> nlohmann::ordered_json {
    if (std::isfinite(v)) return v;
    return format_number(v);
  };
  for (const auto& r : table.rows) {
    nlohmann::ordered_json row;
    row["snr_db"] = num(r.snr_db);
    row["estimator"] = r.estimator;
    row["domain"] = to_string(r.domain);
    row["mae_deg"] = num(r.mae_deg);
    row["median_deg"] = num(r.median_deg);
    row["fallback_rate"] = num(r.fallback_rate);
    row["n"] = r.n;
    j["rows"].push_back(std::move(row));
  }
  out << j.dump(2) << '\n';
}

MetricsTable read_metrics_json(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_argument, std::string("metrics table: ") + e.what());
  }
  auto num = [](const nlohmann::json& v) {
    return v.is_string() ? parse_number(v.get<std::string>()) : v.get<double>();
  };
  MetricsTable table;
  try {
    for (const auto& [k, v] : j.at("provenance").items()) table.provenance[k] = v.get<std::string>();
    for (const auto& row : j.at("rows")) {
      MetricsRow r;
      r.snr_db = num(row.at("snr_db"));
      r.estimator = row.at("estimator").get<std::string>();
      r.domain = parse_domain_tag(row.at("domain").get<std::string>());
      r.mae_deg = num(row.at("mae_deg"));
      r.median_deg = num(row.at("median_deg"));
      r.fallback_rate = num(row.at("fallback_rate"));
      r.n = row.at("n").get<std::size_t>();
      table.rows.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::invalid_argument, std::string("metrics table: ") + e.what());
  }
  return table;
}

void emit_results(const MetricsTable& table, const std::filesystem::path& path, TableFormat format) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io, "cannot open '" + path.string() + "' for writing");
  if (format == TableFormat::csv)
    write_metrics_csv(table, out);
  else
    write_metrics_json(table, out);
  out.flush();
  require(static_cast<bool>(out), ErrorKind::io, "failed writing '" + path.string() + "'");
}

MetricsTable load_results(const std::filesystem::path& path, TableFormat format) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open '" + path.string() + "'");
  return format == TableFormat::csv ? read_metrics_csv(in) : read_metrics_json(in);
}

}  // namespace echodoa
