#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "flowanom/network.hpp"

namespace flowanom {

struct DistanceEvidence {
  ServiceId service_id;
  NodeId from;
  NodeId to;
  double distance_m = 0.0;
  std::size_t support = 0;
};

struct EvidenceSet {
  std::map<ServiceId, std::vector<DistanceEvidence>> by_service;
  // services whose records disagree on the distance of one (origin, destination) pair
  std::map<ServiceId, std::string> inconsistent;
};

struct RouteInferenceOutcome {
  std::vector<ServiceRoute> accepted;
  std::map<ServiceId, std::string> rejected;
};

EvidenceSet collect_evidence(std::span<const FlowRecord> records,
                             double distance_tolerance = kDefaultDistanceTolerance);

// Embeds the stops of one service on a line from pairwise distances.
// Throws Disconnected, Inconsistent or DuplicatePosition.
ServiceRoute infer_route(const ServiceId& service, std::span<const DistanceEvidence> evidence,
                         double distance_tolerance = kDefaultDistanceTolerance);

RouteInferenceOutcome infer_all_routes(std::span<const FlowRecord> records,
                                       double distance_tolerance = kDefaultDistanceTolerance);

}  // namespace flowanom
