#pragma once

// Head-to-head sweeps of the estimators: per-(SNR, estimator, domain) error
// tables, the horizontal SNR shift between two error curves, and table I/O.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "echodoa/checkpoint.hpp"
#include "echodoa/dataset.hpp"
#include "echodoa/doa_estimate.hpp"
#include "echodoa/music.hpp"

namespace echodoa {

enum class DomainTag { full, inside30, outside30 };

std::string_view to_string(DomainTag tag) noexcept;
DomainTag parse_domain_tag(std::string_view text);
/// inside30: |theta| <= 30; outside30: |theta| > 30.
bool in_domain(DomainTag tag, double doa_deg) noexcept;

struct MetricsRow {
  double snr_db = 0.0;
  std::string estimator;
  DomainTag domain = DomainTag::full;
  double mae_deg = 0.0;
  double median_deg = 0.0;
  double fallback_rate = 0.0;
  std::size_t n = 0;

  friend bool operator==(const MetricsRow&, const MetricsRow&) = default;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  std::map<std::string, std::string> provenance;

  const MetricsRow* find(double snr_db, std::string_view estimator, DomainTag domain) const;
  friend bool operator==(const MetricsTable&, const MetricsTable&) = default;
};

struct EstimatorEntry {
  std::string id;
  std::variant<MusicOptions, Checkpoint> method;

  static EstimatorEntry music(MusicOptions options = {}, std::string id = "music");
  static EstimatorEntry network(Checkpoint checkpoint, std::string id = "network");
};

/// One estimate per record, in record order; independent of `workers`.
std::vector<DoaEstimate> estimate_records(const Dataset& dataset, const EstimatorEntry& estimator,
                                          unsigned workers = 1);

/// Aggregates precomputed estimates (one vector per estimator, record order).
/// Only the records listed in `indices` are counted (all when empty).
MetricsTable tabulate(const Dataset& dataset, std::span<const std::string> estimator_ids,
                      std::span<const std::vector<DoaEstimate>> estimates, std::span<const DomainTag> domains,
                      std::span<const std::size_t> indices = {});

/// Rows ordered by SNR ascending, then estimator order, then domain order.
/// Fallbacks count with their true error |0 - theta|. Throws
/// incompatible_checkpoint when a network does not fit the records.
MetricsTable evaluate(const Dataset& dataset, std::span<const EstimatorEntry> estimators,
                      std::span<const DomainTag> domains = {}, unsigned workers = 1,
                      std::span<const std::size_t> indices = {});

/// Median over a's finite-SNR rows of (s' - s), where s' is the SNR at which
/// b's cumulative-minimum MAE curve reaches a's MAE at s (linear interpolation).
/// Positive values mean b needs more SNR than a. Throws non_overlapping_curves.
double snr_crossover(const MetricsTable& table, std::string_view estimator_a, std::string_view estimator_b,
                     DomainTag domain = DomainTag::full);

enum class TableFormat { csv, json };

inline constexpr std::string_view kMetricsHeader = "snr_db,estimator,domain,mae_deg,median_deg,fallback_rate,n";

void write_metrics_csv(const MetricsTable& table, std::ostream& out);
MetricsTable read_metrics_csv(std::istream& in);
void write_metrics_json(const MetricsTable& table, std::ostream& out);
MetricsTable read_metrics_json(std::istream& in);

void emit_results(const MetricsTable& table, const std::filesystem::path& path, TableFormat format);
MetricsTable load_results(const std::filesystem::path& path, TableFormat format);

}  // namespace echodoa
