#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flowanom/models.hpp"

namespace flowanom {

struct DetectConfig {
  double delta_quantile = 0.01;         // fraction of records kept (top q)
  std::optional<double> delta_override;  // absolute cutoff; wins over the quantile

  void validate() const;
};

struct ScoredRecord {
  FlowRecord record;
  Path path;
  double alpha = 0.0;       // (observed - expected) / (sigma * sqrt(distance))
  double expected_s = 0.0;
};

struct FilterResult {
  std::vector<ScoredRecord> records;
  double delta = 0.0;
};

struct LocalizedSegment {
  Segment segment;
  double window_start = 0.0;
  double window_end = 0.0;
};

enum class Provenance {
  InnermostWitness,  // segments of the innermost significant records within this one
  Self,              // nothing significant lies within the record; its own path
};

const char* provenance_name(Provenance p);

struct Localization {
  std::vector<LocalizedSegment> segments;
  Provenance provenance = Provenance::Self;
};

struct AnomalyReport {
  ScoredRecord scored;
  std::size_t containment_count = 0;
  Localization localization;
};

std::vector<ScoredRecord> score(const Model& model, std::span<const Observation> obs);

FilterResult filter_significant(std::span<const ScoredRecord> scored, const DetectConfig& cfg);

// Spatial-temporal nesting: outer's node sequence holds inner's contiguously
// and outer starts strictly earlier and ends strictly later.
bool contains(const ScoredRecord& outer, const ScoredRecord& inner);

// counts[i] = number of other records containing filtered[i]
std::vector<std::size_t> containment_counts(std::span<const ScoredRecord> filtered);

// Indices of `filtered` by containment count desc, then alpha desc, then record id.
std::vector<std::size_t> rank_anomalies(std::span<const ScoredRecord> filtered,
                                        std::span<const std::size_t> counts);

Localization localize(std::size_t outer, std::span<const ScoredRecord> filtered);

// Counting, ranking and localization in one pass; reports come out ranked.
std::vector<AnomalyReport> build_reports(std::span<const ScoredRecord> filtered);

struct DailyRow {
  std::string date;  // YYYY-MM-DD, UTC date of boarding
  double mean_count = 0.0;
  double median_count = 0.0;
  double mean_alpha = 0.0;
  double median_alpha = 0.0;
  std::size_t n = 0;
};

std::string utc_date(double epoch_seconds);

std::vector<DailyRow> daily_series(std::span<const AnomalyReport> reports);

}  // namespace flowanom
