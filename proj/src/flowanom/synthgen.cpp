#include "flowanom/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "flowanom/error.hpp"

namespace flowanom {

namespace {

// Distinct streams for topology and records so changing n_records does not
// reshuffle the network.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    stream};
  return std::mt19937_64(seq);
}

double round_to(double v, double resolution) {
  return resolution > 0.0 ? std::round(v / resolution) * resolution : v;
}

}  // namespace

void SynthConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidArgument, why); };
  if (n_services < 1) fail("n_services must be positive");
  if (stops_per_service < 2) fail("stops_per_service must be at least 2");
  if (shared_corridor < 0 || shared_corridor > stops_per_service)
    fail("shared_corridor must lie in [0, stops_per_service]");
  if (!(segment_min_m > 0.0) || !(segment_max_m >= segment_min_m)) fail("bad segment length range");
  if (!(speed_min_mps > 0.0) || !(speed_max_mps >= speed_min_mps)) fail("bad speed range");
  if (!(noise_sigma2 >= 0.0)) fail("noise_sigma2 must be non-negative");
  if (!(max_physical_speed > speed_max_mps)) fail("max_physical_speed must exceed speed range");
  if (!(day_length_s > 0.0)) fail("day_length_s must be positive");
  if (!(time_resolution_s >= 0.0)) fail("time_resolution_s must be non-negative");
  if (congestion) {
    if (!(congestion->slowdown > 1.0)) fail("slowdown factor must exceed 1");
    if (!(congestion->window_end > congestion->window_start)) fail("empty congestion window");
  }
}

SynthTruth generate_network(const SynthConfig& cfg) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, 1);
  std::uniform_real_distribution<double> length(cfg.segment_min_m, cfg.segment_max_m);
  std::uniform_real_distribution<double> speed(cfg.speed_min_mps, cfg.speed_max_mps);
  // whole metres keep record files exact
  auto draw_length = [&] { return std::max(1.0, std::round(length(rng))); };

  const int corridor = cfg.shared_corridor;
  const int private_stops = cfg.stops_per_service - corridor;
  const int prefix = private_stops / 2;

  std::vector<double> corridor_gaps;
  for (int i = 1; i < corridor; ++i) corridor_gaps.push_back(draw_length());

  SynthTruth truth;
  char name[64];
  for (int s = 0; s < cfg.n_services; ++s) {
    ServiceRoute route;
    std::snprintf(name, sizeof name, "svc%d", s);
    route.service_id = ServiceId(name);
    int private_idx = 0;
    for (int i = 0; i < cfg.stops_per_service; ++i) {
      const bool in_corridor = i >= prefix && i < prefix + corridor;
      if (in_corridor) {
        std::snprintf(name, sizeof name, "c%d", i - prefix);
      } else {
        std::snprintf(name, sizeof name, "s%dn%d", s, private_idx++);
      }
      double pos = 0.0;
      if (i > 0) {
        const bool corridor_gap = in_corridor && i > prefix;
        pos = route.cumulative_m.back() +
              (corridor_gap ? corridor_gaps[static_cast<std::size_t>(i - prefix - 1)] : draw_length());
      }
      route.stops.emplace_back(name);
      route.cumulative_m.push_back(pos);
    }
    truth.routes.push_back(std::move(route));
  }
  truth.network = build_network(truth.routes, 1e-9);
  for (const auto& seg : truth.network.segments()) truth.true_speed.emplace(seg.key(), speed(rng));

  if (cfg.congestion) {
    CongestionSpec c = *cfg.congestion;
    if (!c.segment) {
      const auto& r = truth.routes.front();
      std::size_t mid = corridor > 1 ? static_cast<std::size_t>(prefix + (corridor - 1) / 2)
                                     : (r.stops.size() - 1) / 2;
      c.segment = SegmentKey{r.stops[mid], r.stops[mid + 1]};
    }
    if (!truth.network.find_segment(c.segment->from, c.segment->to)) {
      throw Error(ErrorCode::InvalidArgument, "congested segment " + c.segment->from.str() + ">" +
                                                  c.segment->to.str() + " is not in the network");
    }
    truth.congestion = c;
  }
  return truth;
}

std::vector<FlowRecord> generate_records(const SynthTruth& truth, const SynthConfig& cfg,
                                         SynthStats* stats) {
  cfg.validate();
  auto rng = make_rng(cfg.seed, 2);
  std::uniform_int_distribution<std::size_t> pick_service(0, truth.routes.size() - 1);
  std::uniform_real_distribution<double> start_time(cfg.day_start, cfg.day_start + cfg.day_length_s);
  std::normal_distribution<double> unit_normal(0.0, 1.0);
  SynthStats local;

  std::vector<FlowRecord> out;
  out.reserve(cfg.n_records);
  char id[32];
  for (std::size_t n = 0; n < cfg.n_records; ++n) {
    const ServiceRoute& route = truth.routes[pick_service(rng)];
    const std::size_t stops = route.stops.size();
    // uniform over ordered pairs i < j
    std::uniform_int_distribution<std::size_t> pick_pair(0, stops * (stops - 1) / 2 - 1);
    std::size_t p = pick_pair(rng), i = 0;
    while (p >= stops - 1 - i) {
      p -= stops - 1 - i;
      ++i;
    }
    const std::size_t j = i + 1 + p;

    FlowRecord r;
    std::snprintf(id, sizeof id, "r%07zu", n);
    r.record_id = id;
    r.service_id = route.service_id;
    r.origin = route.stops[i];
    r.destination = route.stops[j];
    r.distance_m = route.cumulative_m[j] - route.cumulative_m[i];
    r.t_start = round_to(start_time(rng), cfg.time_resolution_s);

    double clock = r.t_start;
    for (std::size_t k = i; k < j; ++k) {
      const SegmentKey key{route.stops[k], route.stops[k + 1]};
      const double d = route.cumulative_m[k + 1] - route.cumulative_m[k];
      double c = truth.true_speed.at(key);
      if (truth.congestion && *truth.congestion->segment == key &&
          clock >= truth.congestion->window_start && clock < truth.congestion->window_end) {
        c /= truth.congestion->slowdown;
      }
      const double mean = d / c;
      const double sd = std::sqrt(d * cfg.noise_sigma2);
      const double floor_t = d / cfg.max_physical_speed;
      double t = mean + sd * unit_normal(rng);
      ++local.segment_samples;
      // truncated Gaussian by rejection
      int tries = 0;
      while (t < floor_t) {
        ++local.truncations;
        t = ++tries < 100 ? mean + sd * unit_normal(rng) : floor_t;
      }
      clock += t;
    }
    r.t_end = round_to(clock, cfg.time_resolution_s);
    if (!(r.t_end > r.t_start)) r.t_end = r.t_start + std::max(cfg.time_resolution_s, 1e-3);
    out.push_back(std::move(r));
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace flowanom
