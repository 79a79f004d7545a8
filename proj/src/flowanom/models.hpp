#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "flowanom/network.hpp"

namespace flowanom {

// A validated record together with the path it resolved to.
struct Observation {
  FlowRecord record;
  Path path;
};

std::vector<Observation> observe(const NetworkGraph& g, std::span<const FlowRecord> records,
                                 double distance_tolerance = kDefaultDistanceTolerance);

struct TrainConfig {
  double eta = 2e-3;   // learning rate
  double tau = 1e-4;   // log-barrier strength
  double psi = 1e-2;   // smoothing strength (smoothed model only)
  int epochs = 40;
  double c_min = 0.1;  // speed floor, m/s
  std::uint64_t shuffle_seed = 0;
  bool variance_refresh = true;
  // lower bound on the variance used inside the gradient; a perfect fit
  // would otherwise divide by zero
  double sigma2_floor = 1e-3;

  void validate() const;
};

struct Baseline1Model {
  double c = 0.0;
  double sigma2 = 0.0;
};

struct Baseline2Model {
  std::map<std::string, double> c_by_path;
  // pooled speed used for paths absent from training
  double fallback_c = 0.0;
  double sigma2 = 0.0;
};

struct EdgeModel {
  std::map<SegmentKey, double> c_by_segment;
  double sigma2 = 0.0;
  bool smoothed = false;
};

using Model = std::variant<Baseline1Model, Baseline2Model, EdgeModel>;

enum class ModelKind { Baseline1, Baseline2, Edge, SmoothedEdge };

const char* model_kind_name(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);
ModelKind kind_of(const Model& model);
double sigma2_of(const Model& model);

Baseline1Model fit_baseline1(std::span<const Observation> obs);
Baseline2Model fit_baseline2(std::span<const Observation> obs);

double expected_time(const Baseline1Model& m, const Path& path, double distance_m);
double expected_time(const Baseline2Model& m, const Path& path, double distance_m);
double expected_time(const EdgeModel& m, const Path& path, double distance_m);
double expected_time(const Model& m, const Path& path, double distance_m);

// Per-record objective: Gaussian log likelihood plus the log barrier, minus
// the consecutive-speed penalty when the model is smoothed.
double log_likelihood(const EdgeModel& m, const Observation& o, const TrainConfig& cfg);

// Partial derivative of log_likelihood with respect to the speed of `seg`.
double gradient(const EdgeModel& m, const Observation& o, const SegmentKey& seg,
                const TrainConfig& cfg);

// Every network segment starts at the Baseline 1 speed.
EdgeModel init_edge_model(const NetworkGraph& g, std::span<const Observation> obs,
                          bool smoothed = false);

double estimate_variance(const Model& m, std::span<const Observation> obs);
double estimate_variance(const EdgeModel& m, std::span<const Observation> obs);

// One pass of stochastic gradient ascent in a permutation seeded by
// (cfg.shuffle_seed, epoch_index). Returns the post-epoch sum of squares.
double sgd_epoch(EdgeModel& m, std::span<const Observation> obs, const TrainConfig& cfg,
                 std::uint64_t epoch_index = 0);

struct EpochStats {
  int epoch = 0;
  double sse = 0.0;
  double sigma2 = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  // segments no training record traverses; their speed never moves
  std::vector<SegmentKey> untouched;
};

using EpochCallback = std::function<void(const EpochStats&)>;

TrainReport train_edge(EdgeModel& m, std::span<const Observation> obs, const TrainConfig& cfg,
                       const EpochCallback& on_epoch = {});

Model fit_model(ModelKind kind, const NetworkGraph& g, std::span<const Observation> obs,
                const TrainConfig& cfg, TrainReport* report = nullptr,
                const EpochCallback& on_epoch = {});

void save_model(const Model& m, std::ostream& os);
Model load_model(std::istream& is);

}  // namespace flowanom
