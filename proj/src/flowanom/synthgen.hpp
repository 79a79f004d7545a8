#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "flowanom/network.hpp"

namespace flowanom {

struct CongestionSpec {
  // defaults to the middle segment of the first service (or of the shared corridor)
  std::optional<SegmentKey> segment;
  double window_start = 0.0;  // epoch seconds
  double window_end = 0.0;
  double slowdown = 3.0;      // travel at true_speed / slowdown inside the window
};

struct SynthConfig {
  int n_services = 4;
  int stops_per_service = 10;
  int shared_corridor = 0;  // stops every service passes through, mid-route
  double segment_min_m = 300.0;
  double segment_max_m = 1500.0;
  double speed_min_mps = 3.0;
  double speed_max_mps = 12.0;
  std::size_t n_records = 2000;
  double noise_sigma2 = 0.05;       // generative variance, s^2 per metre
  double max_physical_speed = 40.0;  // truncation point of segment times
  double day_start = 1323928800.0;   // 2011-12-15T06:00:00Z
  double day_length_s = 16.0 * 3600.0;
  double time_resolution_s = 1.0;    // 0 keeps fractional timestamps
  std::optional<CongestionSpec> congestion;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SynthTruth {
  NetworkGraph network;
  std::vector<ServiceRoute> routes;
  std::map<SegmentKey, double> true_speed;
  std::optional<CongestionSpec> congestion;  // segment always resolved
};

struct SynthStats {
  std::size_t segment_samples = 0;
  std::size_t truncations = 0;
};

SynthTruth generate_network(const SynthConfig& cfg);

std::vector<FlowRecord> generate_records(const SynthTruth& truth, const SynthConfig& cfg,
                                         SynthStats* stats = nullptr);

}  // namespace flowanom
