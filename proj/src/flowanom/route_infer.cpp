#include "flowanom/route_infer.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>
#include <tuple>

#include "flowanom/error.hpp"

namespace flowanom {

EvidenceSet collect_evidence(std::span<const FlowRecord> records, double distance_tolerance) {
  EvidenceSet out;
  std::map<std::tuple<ServiceId, NodeId, NodeId>, DistanceEvidence> merged;
  for (const auto& r : records) {
    auto key = std::make_tuple(r.service_id, r.origin, r.destination);
    auto [it, inserted] =
        merged.emplace(key, DistanceEvidence{r.service_id, r.origin, r.destination, r.distance_m, 1});
    if (inserted) continue;
    auto& ev = it->second;
    if (std::abs(ev.distance_m - r.distance_m) > distance_tolerance) {
      if (!out.inconsistent.count(r.service_id)) {
        std::ostringstream os;
        os << "records disagree on " << r.origin << ">" << r.destination << " (" << ev.distance_m
           << " vs " << r.distance_m << ")";
        out.inconsistent.emplace(r.service_id, os.str());
      }
      continue;
    }
    ++ev.support;
  }
  for (auto& [key, ev] : merged) out.by_service[ev.service_id].push_back(std::move(ev));
  return out;
}

ServiceRoute infer_route(const ServiceId& service, std::span<const DistanceEvidence> evidence,
                         double distance_tolerance) {
  if (evidence.empty()) throw Error(ErrorCode::EmptyInput, "no evidence for " + service.str());

  // undirected constraint graph: (neighbour, signed offset)
  std::map<NodeId, std::vector<std::pair<NodeId, double>>> adj;
  for (const auto& ev : evidence) {
    adj[ev.from].emplace_back(ev.to, ev.distance_m);
    adj[ev.to].emplace_back(ev.from, -ev.distance_m);
  }

  std::map<NodeId, double> pos;
  const NodeId& anchor = adj.begin()->first;
  pos.emplace(anchor, 0.0);
  std::deque<NodeId> queue{anchor};
  while (!queue.empty()) {
    NodeId cur = queue.front();
    queue.pop_front();
    const double base = pos.at(cur);
    for (const auto& [next, offset] : adj.at(cur)) {
      if (pos.emplace(next, base + offset).second) queue.push_back(next);
    }
  }
  if (pos.size() != adj.size()) {
    throw Error(ErrorCode::Disconnected, "service " + service.str() + ": evidence covers " +
                                             std::to_string(adj.size()) + " stops but only " +
                                             std::to_string(pos.size()) + " are linked");
  }

  for (const auto& ev : evidence) {
    const double implied = pos.at(ev.to) - pos.at(ev.from);
    if (std::abs(implied - ev.distance_m) > distance_tolerance) {
      std::ostringstream os;
      os << "service " << service << ": " << ev.from << ">" << ev.to << " recorded as "
         << ev.distance_m << " but positions imply " << implied;
      throw Error(ErrorCode::Inconsistent, os.str());
    }
  }

  std::vector<std::pair<double, NodeId>> order;
  order.reserve(pos.size());
  for (const auto& [node, p] : pos) order.emplace_back(p, node);
  std::sort(order.begin(), order.end());
  const double shift = order.front().first;

  ServiceRoute route;
  route.service_id = service;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && order[i].first - order[i - 1].first <= distance_tolerance) {
      throw Error(ErrorCode::DuplicatePosition, "service " + service.str() + ": stops " +
                                                    order[i - 1].second.str() + " and " +
                                                    order[i].second.str() + " coincide");
    }
    route.stops.push_back(order[i].second);
    route.cumulative_m.push_back(order[i].first - shift);
  }
  return route;
}

RouteInferenceOutcome infer_all_routes(std::span<const FlowRecord> records,
                                       double distance_tolerance) {
  RouteInferenceOutcome out;
  EvidenceSet ev = collect_evidence(records, distance_tolerance);
  for (const auto& [service, reason] : ev.inconsistent) out.rejected.emplace(service, reason);
  for (const auto& [service, items] : ev.by_service) {
    if (out.rejected.count(service)) continue;
    try {
      out.accepted.push_back(infer_route(service, items, distance_tolerance));
    } catch (const Error& e) {
      out.rejected.emplace(service, std::string(error_code_name(e.code())) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace flowanom
