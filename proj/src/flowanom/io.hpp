#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "flowanom/evaluation.hpp"
#include "flowanom/localize.hpp"
#include "flowanom/models.hpp"
#include "flowanom/route_infer.hpp"
#include "flowanom/synthgen.hpp"

namespace flowanom {

// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

// Epoch seconds (fractions allowed) or ISO-8601 with Z or a numeric offset.
double parse_timestamp(const std::string& text);

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct ParseLog {
  std::size_t rows = 0;
  std::vector<RejectedRow> rejected;
};

// Header row required: record_id, service_id, board_stop, alight_stop,
// board_time, alight_time, distance_m (any order; ',', ';' or tab delimited).
// Malformed rows are skipped and logged.
std::vector<FlowRecord> parse_records(std::istream& in, ParseLog* log = nullptr);
std::vector<FlowRecord> read_records_file(const std::string& path, ParseLog* log = nullptr);
void write_records(std::ostream& os, const std::vector<FlowRecord>& records);

void write_routes(std::ostream& os, const std::vector<ServiceRoute>& routes);
std::vector<ServiceRoute> read_routes(std::istream& in);
void write_rejections(std::ostream& os, const std::map<ServiceId, std::string>& rejected);

void write_scored(std::ostream& os, const std::vector<ScoredRecord>& scored, double delta);

struct ScoredFile {
  double delta = 0.0;
  std::vector<ScoredRecord> significant;
  std::size_t total = 0;
};

// Paths are re-resolved against `g`.
ScoredFile read_scored(std::istream& in, const NetworkGraph& g);

void write_reports(std::ostream& os, const std::vector<AnomalyReport>& reports);
void write_daily(std::ostream& os, const std::vector<DailyRow>& rows);
void write_crossval(std::ostream& os, const CrossValResult& result);
void write_truth(std::ostream& os, const SynthTruth& truth);
void write_epoch_log(std::ostream& os, const std::vector<EpochStats>& epochs);

}  // namespace flowanom
