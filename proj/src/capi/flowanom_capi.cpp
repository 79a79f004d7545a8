#include "flowanom/flowanom.h"

#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <string>
#include <utility>
#include <vector>

#include "flowanom/error.hpp"
#include "flowanom/evaluation.hpp"
#include "flowanom/io.hpp"
#include "flowanom/localize.hpp"
#include "flowanom/models.hpp"
#include "flowanom/route_infer.hpp"
#include "flowanom/synthgen.hpp"

namespace fa = flowanom;

struct fa_records {
  std::vector<fa::FlowRecord> records;
  fa::ParseLog log;
};

struct fa_routes {
  std::vector<fa::ServiceRoute> accepted;
  std::map<fa::ServiceId, std::string> rejected;
};

struct fa_network {
  fa::NetworkGraph graph;
};

struct fa_model {
  fa::Model model;
};

struct fa_scored {
  std::vector<fa::ScoredRecord> records;  // all scored, or only significant when read back
  double delta = 0.0;
  std::size_t total = 0;
};

struct fa_reports {
  std::vector<fa::AnomalyReport> reports;
};

namespace {

thread_local std::string g_last_error;

fa_status to_status(fa::ErrorCode code) {
  using E = fa::ErrorCode;
  switch (code) {
    case E::InvalidArgument: return FA_ERR_INVALID_ARGUMENT;
    case E::Io: return FA_ERR_UNREADABLE_INPUT;
    case E::Parse: return FA_ERR_PARSE;
    case E::DistanceConflict: return FA_ERR_DISTANCE_CONFLICT;
    case E::UnknownService: return FA_ERR_UNKNOWN_SERVICE;
    case E::StopNotOnRoute: return FA_ERR_STOP_NOT_ON_ROUTE;
    case E::WrongDirection: return FA_ERR_WRONG_DIRECTION;
    case E::DistanceMismatch: return FA_ERR_DISTANCE_MISMATCH;
    case E::EmptyInput: return FA_ERR_EMPTY_INPUT;
    case E::MissingSegmentSpeed: return FA_ERR_MISSING_SEGMENT_SPEED;
    case E::NonPositiveVariance: return FA_ERR_NON_POSITIVE_VARIANCE;
    case E::ZeroVariance: return FA_ERR_ZERO_VARIANCE;
    case E::SegmentNotOnPath: return FA_ERR_SEGMENT_NOT_ON_PATH;
    case E::TooFewRecords: return FA_ERR_TOO_FEW_RECORDS;
    case E::AllRowsRejected: return FA_ERR_ALL_ROWS_REJECTED;
    case E::Disconnected: return FA_ERR_DISCONNECTED;
    case E::Inconsistent: return FA_ERR_INCONSISTENT;
    case E::DuplicatePosition: return FA_ERR_DUPLICATE_POSITION;
  }
  return FA_ERR_INTERNAL;
}

fa_status fail(fa_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

// Runs `body`, translating exceptions into a status and the last-error text.
template <typename F>
fa_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return FA_OK;
  } catch (const fa::Error& e) {
    return fail(to_status(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(FA_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(FA_ERR_INTERNAL, e.what());
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw fa::Error(fa::ErrorCode::InvalidArgument, what);
}

std::ofstream open_out(const char* path) {
  require(path != nullptr, "output path is NULL");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw fa::Error(fa::ErrorCode::Io, std::string("cannot write ") + path);
  return os;
}

std::ifstream open_in(const char* path) {
  require(path != nullptr, "input path is NULL");
  std::ifstream is(path, std::ios::binary);
  if (!is) throw fa::Error(fa::ErrorCode::Io, std::string("cannot read ") + path);
  return is;
}

void finish(std::ofstream& os, const char* path) {
  os.flush();
  if (!os) throw fa::Error(fa::ErrorCode::Io, std::string("write failed: ") + path);
}

fa::ModelKind to_kind(fa_model_kind k) {
  switch (k) {
    case FA_MODEL_BASELINE1: return fa::ModelKind::Baseline1;
    case FA_MODEL_BASELINE2: return fa::ModelKind::Baseline2;
    case FA_MODEL_EDGE: return fa::ModelKind::Edge;
    case FA_MODEL_SMOOTHED: return fa::ModelKind::SmoothedEdge;
  }
  throw fa::Error(fa::ErrorCode::InvalidArgument, "unknown model kind");
}

fa::TrainConfig to_train_config(const fa_train_config* c) {
  require(c != nullptr, "train config is NULL");
  fa::TrainConfig t;
  t.eta = c->eta;
  t.tau = c->tau;
  t.psi = c->psi;
  t.epochs = c->epochs;
  t.c_min = c->c_min;
  t.shuffle_seed = c->shuffle_seed;
  t.variance_refresh = c->variance_refresh != 0;
  t.sigma2_floor = c->sigma2_floor;
  t.validate();
  return t;
}

// Records that resolve onto the network; the rest are counted.
std::vector<fa::Observation> observe_lenient(const fa::NetworkGraph& g,
                                             const std::vector<fa::FlowRecord>& records,
                                             double tolerance, size_t* skipped) {
  std::vector<fa::Observation> out;
  out.reserve(records.size());
  std::size_t n_skipped = 0;
  for (const auto& r : records) {
    try {
      out.push_back({r, fa::validate_record(g, r, tolerance)});
    } catch (const fa::Error&) {
      ++n_skipped;
    }
  }
  if (skipped) *skipped = n_skipped;
  if (out.empty()) throw fa::Error(fa::ErrorCode::EmptyInput, "no record resolves onto the network");
  return out;
}

}  // namespace

extern "C" {

const char* fa_version(void) { return "1.0.0"; }

const char* fa_status_name(fa_status status) {
  switch (status) {
    case FA_OK: return "OK";
    case FA_ERR_INVALID_ARGUMENT: return "InvalidArgument";
    case FA_ERR_UNREADABLE_INPUT: return "UnreadableInput";
    case FA_ERR_PARSE: return "ParseError";
    case FA_ERR_DISTANCE_CONFLICT: return "DistanceConflict";
    case FA_ERR_UNKNOWN_SERVICE: return "UnknownService";
    case FA_ERR_STOP_NOT_ON_ROUTE: return "StopNotOnRoute";
    case FA_ERR_WRONG_DIRECTION: return "WrongDirection";
    case FA_ERR_DISTANCE_MISMATCH: return "DistanceMismatch";
    case FA_ERR_EMPTY_INPUT: return "EmptyInput";
    case FA_ERR_MISSING_SEGMENT_SPEED: return "MissingSegmentSpeed";
    case FA_ERR_NON_POSITIVE_VARIANCE: return "NonPositiveVariance";
    case FA_ERR_ZERO_VARIANCE: return "ZeroVariance";
    case FA_ERR_SEGMENT_NOT_ON_PATH: return "SegmentNotOnPath";
    case FA_ERR_TOO_FEW_RECORDS: return "TooFewRecords";
    case FA_ERR_ALL_ROWS_REJECTED: return "AllRowsRejected";
    case FA_ERR_DISCONNECTED: return "Disconnected";
    case FA_ERR_INCONSISTENT: return "Inconsistent";
    case FA_ERR_DUPLICATE_POSITION: return "DuplicatePosition";
    case FA_ERR_INTERNAL: return "Internal";
  }
  return "Unknown";
}

const char* fa_last_error(void) { return g_last_error.c_str(); }

fa_status fa_records_read(const char* path, fa_records** out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    *out = nullptr;
    auto in = open_in(path);
    auto h = std::make_unique<fa_records>();
    h->records = fa::parse_records(in, &h->log);
    *out = h.release();
  });
}

size_t fa_records_count(const fa_records* records) { return records ? records->records.size() : 0; }

size_t fa_records_rejected_count(const fa_records* records) {
  return records ? records->log.rejected.size() : 0;
}

fa_status fa_records_rejected_at(const fa_records* records, size_t index, size_t* line,
                                 const char** reason) {
  return guarded([&] {
    require(records != nullptr && index < records->log.rejected.size(), "reject index out of range");
    const auto& r = records->log.rejected[index];
    if (line) *line = r.line;
    if (reason) *reason = r.reason.c_str();
  });
}

void fa_records_free(fa_records* records) { delete records; }

fa_status fa_routes_infer(const fa_records* records, double distance_tolerance, fa_routes** out) {
  return guarded([&] {
    require(records != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    auto outcome = fa::infer_all_routes(records->records, distance_tolerance);
    auto h = std::make_unique<fa_routes>();
    h->accepted = std::move(outcome.accepted);
    h->rejected = std::move(outcome.rejected);
    *out = h.release();
  });
}

fa_status fa_routes_read(const char* path, fa_routes** out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    *out = nullptr;
    auto in = open_in(path);
    auto h = std::make_unique<fa_routes>();
    h->accepted = fa::read_routes(in);
    *out = h.release();
  });
}

fa_status fa_routes_write(const fa_routes* routes, const char* routes_path,
                          const char* rejects_path) {
  return guarded([&] {
    require(routes != nullptr, "routes is NULL");
    auto os = open_out(routes_path);
    fa::write_routes(os, routes->accepted);
    finish(os, routes_path);
    if (rejects_path) {
      auto rs = open_out(rejects_path);
      fa::write_rejections(rs, routes->rejected);
      finish(rs, rejects_path);
    }
  });
}

size_t fa_routes_accepted_count(const fa_routes* routes) {
  return routes ? routes->accepted.size() : 0;
}

size_t fa_routes_rejected_count(const fa_routes* routes) {
  return routes ? routes->rejected.size() : 0;
}

void fa_routes_free(fa_routes* routes) { delete routes; }

fa_status fa_network_build(const fa_routes* routes, double distance_tolerance, fa_network** out) {
  return guarded([&] {
    require(routes != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    require(!routes->accepted.empty(), "no accepted routes to build a network from");
    auto h = std::make_unique<fa_network>();
    h->graph = fa::build_network(routes->accepted, distance_tolerance);
    *out = h.release();
  });
}

size_t fa_network_node_count(const fa_network* network) {
  return network ? network->graph.nodes().size() : 0;
}

size_t fa_network_segment_count(const fa_network* network) {
  return network ? network->graph.segments().size() : 0;
}

void fa_network_free(fa_network* network) { delete network; }

void fa_train_config_init(fa_train_config* cfg) {
  if (!cfg) return;
  const fa::TrainConfig d;
  cfg->eta = d.eta;
  cfg->tau = d.tau;
  cfg->psi = d.psi;
  cfg->epochs = d.epochs;
  cfg->c_min = d.c_min;
  cfg->shuffle_seed = d.shuffle_seed;
  cfg->variance_refresh = d.variance_refresh ? 1 : 0;
  cfg->sigma2_floor = d.sigma2_floor;
}

fa_status fa_model_train(const fa_network* network, const fa_records* records, fa_model_kind kind,
                         const fa_train_config* cfg, double distance_tolerance,
                         fa_epoch_fn on_epoch, void* user, fa_model** out, size_t* skipped) {
  return guarded([&] {
    require(network != nullptr && records != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    const auto tcfg = to_train_config(cfg);
    const auto obs = observe_lenient(network->graph, records->records, distance_tolerance, skipped);
    fa::EpochCallback cb;
    if (on_epoch) cb = [&](const fa::EpochStats& s) { on_epoch(s.epoch, s.sse, s.sigma2, user); };
    auto h = std::make_unique<fa_model>();
    h->model = fa::fit_model(to_kind(kind), network->graph, obs, tcfg, nullptr, cb);
    *out = h.release();
  });
}

fa_status fa_model_save(const fa_model* model, const char* path) {
  return guarded([&] {
    require(model != nullptr, "model is NULL");
    auto os = open_out(path);
    fa::save_model(model->model, os);
    finish(os, path);
  });
}

fa_status fa_model_load(const char* path, fa_model** out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    *out = nullptr;
    auto in = open_in(path);
    auto h = std::make_unique<fa_model>();
    h->model = fa::load_model(in);
    *out = h.release();
  });
}

fa_model_kind fa_model_get_kind(const fa_model* model) {
  switch (fa::kind_of(model->model)) {
    case fa::ModelKind::Baseline1: return FA_MODEL_BASELINE1;
    case fa::ModelKind::Baseline2: return FA_MODEL_BASELINE2;
    case fa::ModelKind::Edge: return FA_MODEL_EDGE;
    case fa::ModelKind::SmoothedEdge: return FA_MODEL_SMOOTHED;
  }
  return FA_MODEL_BASELINE1;
}

double fa_model_sigma2(const fa_model* model) { return fa::sigma2_of(model->model); }

fa_status fa_model_expected_time(const fa_model* model, const fa_network* network,
                                 const char* service, const char* origin, const char* destination,
                                 double distance_m, double* seconds) {
  return guarded([&] {
    require(model && network && service && origin && destination && seconds, "NULL argument");
    const auto path = fa::resolve_path(network->graph, fa::ServiceId(service), fa::NodeId(origin),
                                       fa::NodeId(destination));
    *seconds = fa::expected_time(model->model, path, distance_m);
  });
}

void fa_model_free(fa_model* model) { delete model; }

fa_status fa_crossval(const fa_network* network, const fa_records* records, int k,
                      const fa_model_kind* kinds, size_t n_kinds, const fa_train_config* cfg,
                      uint64_t seed, double distance_tolerance, const char* out_path) {
  return guarded([&] {
    require(network != nullptr && records != nullptr && kinds != nullptr && n_kinds > 0,
            "NULL argument");
    const auto tcfg = to_train_config(cfg);
    const auto obs = observe_lenient(network->graph, records->records, distance_tolerance, nullptr);
    std::vector<fa::ModelKind> ks;
    for (size_t i = 0; i < n_kinds; ++i) ks.push_back(to_kind(kinds[i]));
    const auto result = fa::kfold(network->graph, obs, k, ks, tcfg, seed);
    auto os = open_out(out_path);
    fa::write_crossval(os, result);
    finish(os, out_path);
  });
}

void fa_detect_config_init(fa_detect_config* cfg) {
  if (!cfg) return;
  const fa::DetectConfig d;
  cfg->delta_quantile = d.delta_quantile;
  cfg->use_override = 0;
  cfg->delta_override = 0.0;
}

fa_status fa_detect(const fa_model* model, const fa_network* network, const fa_records* records,
                    const fa_detect_config* cfg, double distance_tolerance, fa_scored** out,
                    size_t* skipped) {
  return guarded([&] {
    require(model && network && records && cfg && out, "NULL argument");
    *out = nullptr;
    fa::DetectConfig dcfg;
    dcfg.delta_quantile = cfg->delta_quantile;
    if (cfg->use_override) dcfg.delta_override = cfg->delta_override;
    dcfg.validate();
    const auto obs = observe_lenient(network->graph, records->records, distance_tolerance, skipped);
    auto h = std::make_unique<fa_scored>();
    h->records = fa::score(model->model, obs);
    h->delta = fa::filter_significant(h->records, dcfg).delta;
    h->total = h->records.size();
    *out = h.release();
  });
}

fa_status fa_scored_write(const fa_scored* scored, const char* path) {
  return guarded([&] {
    require(scored != nullptr, "scored is NULL");
    auto os = open_out(path);
    fa::write_scored(os, scored->records, scored->delta);
    finish(os, path);
  });
}

fa_status fa_scored_read(const char* path, const fa_network* network, fa_scored** out) {
  return guarded([&] {
    require(network != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    auto in = open_in(path);
    auto file = fa::read_scored(in, network->graph);
    auto h = std::make_unique<fa_scored>();
    h->records = std::move(file.significant);
    h->delta = file.delta;
    h->total = file.total;
    *out = h.release();
  });
}

double fa_scored_delta(const fa_scored* scored) { return scored ? scored->delta : 0.0; }

size_t fa_scored_total(const fa_scored* scored) { return scored ? scored->total : 0; }

size_t fa_scored_significant(const fa_scored* scored) {
  if (!scored) return 0;
  size_t n = 0;
  for (const auto& s : scored->records) n += s.alpha > scored->delta ? 1 : 0;
  return n;
}

void fa_scored_free(fa_scored* scored) { delete scored; }

fa_status fa_localize(const fa_scored* scored, fa_reports** out) {
  return guarded([&] {
    require(scored != nullptr && out != nullptr, "NULL argument");
    *out = nullptr;
    std::vector<fa::ScoredRecord> filtered;
    for (const auto& s : scored->records)
      if (s.alpha > scored->delta) filtered.push_back(s);
    auto h = std::make_unique<fa_reports>();
    h->reports = fa::build_reports(filtered);
    *out = h.release();
  });
}

fa_status fa_reports_write(const fa_reports* reports, const char* report_path,
                           const char* daily_path) {
  return guarded([&] {
    require(reports != nullptr, "reports is NULL");
    auto os = open_out(report_path);
    fa::write_reports(os, reports->reports);
    finish(os, report_path);
    if (daily_path) {
      auto ds = open_out(daily_path);
      fa::write_daily(ds, fa::daily_series(reports->reports));
      finish(ds, daily_path);
    }
  });
}

size_t fa_reports_count(const fa_reports* reports) { return reports ? reports->reports.size() : 0; }

const char* fa_reports_record_id(const fa_reports* reports, size_t rank) {
  if (!reports || rank >= reports->reports.size()) return nullptr;
  return reports->reports[rank].scored.record.record_id.c_str();
}

size_t fa_reports_containment(const fa_reports* reports, size_t rank) {
  if (!reports || rank >= reports->reports.size()) return 0;
  return reports->reports[rank].containment_count;
}

void fa_reports_free(fa_reports* reports) { delete reports; }

void fa_synth_config_init(fa_synth_config* cfg) {
  if (!cfg) return;
  const fa::SynthConfig d;
  cfg->n_services = d.n_services;
  cfg->stops_per_service = d.stops_per_service;
  cfg->shared_corridor = d.shared_corridor;
  cfg->segment_min_m = d.segment_min_m;
  cfg->segment_max_m = d.segment_max_m;
  cfg->speed_min_mps = d.speed_min_mps;
  cfg->speed_max_mps = d.speed_max_mps;
  cfg->n_records = d.n_records;
  cfg->noise_sigma2 = d.noise_sigma2;
  cfg->max_physical_speed = d.max_physical_speed;
  cfg->day_start = d.day_start;
  cfg->day_length_s = d.day_length_s;
  cfg->time_resolution_s = d.time_resolution_s;
  cfg->congestion = 0;
  cfg->congested_from = nullptr;
  cfg->congested_to = nullptr;
  cfg->window_start = d.day_start + 4 * 3600.0;
  cfg->window_end = d.day_start + 6 * 3600.0;
  cfg->slowdown = 3.0;
  cfg->seed = d.seed;
}

fa_status fa_simulate(const fa_synth_config* cfg, const char* records_path, const char* truth_path,
                      const char* routes_path) {
  return guarded([&] {
    require(cfg != nullptr, "synth config is NULL");
    fa::SynthConfig s;
    s.n_services = cfg->n_services;
    s.stops_per_service = cfg->stops_per_service;
    s.shared_corridor = cfg->shared_corridor;
    s.segment_min_m = cfg->segment_min_m;
    s.segment_max_m = cfg->segment_max_m;
    s.speed_min_mps = cfg->speed_min_mps;
    s.speed_max_mps = cfg->speed_max_mps;
    s.n_records = cfg->n_records;
    s.noise_sigma2 = cfg->noise_sigma2;
    s.max_physical_speed = cfg->max_physical_speed;
    s.day_start = cfg->day_start;
    s.day_length_s = cfg->day_length_s;
    s.time_resolution_s = cfg->time_resolution_s;
    s.seed = cfg->seed;
    if (cfg->congestion) {
      fa::CongestionSpec c;
      require((cfg->congested_from == nullptr) == (cfg->congested_to == nullptr),
              "congested segment needs both endpoints");
      if (cfg->congested_from)
        c.segment = fa::SegmentKey{fa::NodeId(cfg->congested_from), fa::NodeId(cfg->congested_to)};
      c.window_start = cfg->window_start;
      c.window_end = cfg->window_end;
      c.slowdown = cfg->slowdown;
      s.congestion = c;
    }
    const auto truth = fa::generate_network(s);
    const auto records = fa::generate_records(truth, s);

    auto rs = open_out(records_path);
    fa::write_records(rs, records);
    finish(rs, records_path);
    auto ts = open_out(truth_path);
    fa::write_truth(ts, truth);
    finish(ts, truth_path);
    if (routes_path) {
      auto os = open_out(routes_path);
      fa::write_routes(os, truth.routes);
      finish(os, routes_path);
    }
  });
}

}  // extern "C"
