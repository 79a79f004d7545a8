#pragma once

#include <random>
#include <string>
#include <vector>

#include "flowanom/localize.hpp"
#include "flowanom/network.hpp"

namespace fixture {

using namespace flowanom;

inline ServiceRoute route(const std::string& service, std::vector<std::string> stops,
                          std::vector<double> cum) {
  ServiceRoute r;
  r.service_id = ServiceId(service);
  for (auto& s : stops) r.stops.emplace_back(s);
  r.cumulative_m = std::move(cum);
  return r;
}

inline FlowRecord record(const std::string& id, const std::string& service, const std::string& from,
                         const std::string& to, double t0, double t1, double d) {
  FlowRecord r;
  r.record_id = id;
  r.service_id = ServiceId(service);
  r.origin = NodeId(from);
  r.destination = NodeId(to);
  r.t_start = t0;
  r.t_end = t1;
  r.distance_m = d;
  return r;
}

// a -> b -> c -> d with 100 m, 200 m, 300 m gaps
inline NetworkGraph abcd() {
  std::vector<ServiceRoute> routes{route("s1", {"a", "b", "c", "d"}, {0, 100, 300, 600})};
  return build_network(routes);
}

// Random significant records over one long route: random stop spans and
// random nested-ish times.
inline std::vector<ScoredRecord> random_scored(std::mt19937_64& rng, std::size_t n,
                                               const NetworkGraph& g, const ServiceRoute& r) {
  std::uniform_int_distribution<std::size_t> stop(0, r.stops.size() - 1);
  std::uniform_real_distribution<double> t0(0.0, 3600.0), dur(60.0, 1800.0), alpha(0.5, 5.0);
  std::vector<ScoredRecord> out;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t i = stop(rng), j = stop(rng);
    while (i == j) j = stop(rng);
    if (i > j) std::swap(i, j);
    ScoredRecord s;
    const double start = std::round(t0(rng));
    s.record = record("r" + std::to_string(k), r.service_id.str(), r.stops[i].str(),
                      r.stops[j].str(), start, start + std::round(dur(rng)),
                      r.cumulative_m[j] - r.cumulative_m[i]);
    s.path = resolve_path(g, r.service_id, r.stops[i], r.stops[j]);
    s.alpha = alpha(rng);
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace fixture
