#include "flowanom/network.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "flowanom/error.hpp"

namespace flowanom {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "UnreadableInput";
    case ErrorCode::Parse: return "ParseError";
    case ErrorCode::DistanceConflict: return "DistanceConflict";
    case ErrorCode::UnknownService: return "UnknownService";
    case ErrorCode::StopNotOnRoute: return "StopNotOnRoute";
    case ErrorCode::WrongDirection: return "WrongDirection";
    case ErrorCode::DistanceMismatch: return "DistanceMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::MissingSegmentSpeed: return "MissingSegmentSpeed";
    case ErrorCode::NonPositiveVariance: return "NonPositiveVariance";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::SegmentNotOnPath: return "SegmentNotOnPath";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::AllRowsRejected: return "AllRowsRejected";
    case ErrorCode::Disconnected: return "Disconnected";
    case ErrorCode::Inconsistent: return "Inconsistent";
    case ErrorCode::DuplicatePosition: return "DuplicatePosition";
  }
  return "Unknown";
}

bool is_valid_token(const std::string& s) {
  if (s.empty()) return false;
  return std::none_of(s.begin(), s.end(), [](char ch) {
    return std::isspace(static_cast<unsigned char>(ch)) || ch == ',' || ch == '>' || ch == '|' ||
           ch == '@' || ch == '#';
  });
}

void ServiceRoute::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::InvalidArgument, "route " + service_id.str() + ": " + why);
  };
  if (!is_valid_token(service_id.str())) fail("invalid service id");
  if (stops.size() != cumulative_m.size()) fail("stops and positions differ in length");
  if (stops.size() < 2) fail("fewer than two stops");
  std::set<NodeId> seen;
  for (std::size_t i = 0; i < stops.size(); ++i) {
    if (!is_valid_token(stops[i].str())) fail("invalid stop id '" + stops[i].str() + "'");
    if (!seen.insert(stops[i]).second) fail("stop " + stops[i].str() + " repeats");
    if (!(cumulative_m[i] >= 0.0) || !std::isfinite(cumulative_m[i])) fail("negative position");
    if (i > 0 && !(cumulative_m[i] > cumulative_m[i - 1])) fail("positions not increasing");
  }
}

std::optional<std::size_t> ServiceRoute::position_of(const NodeId& stop) const {
  auto it = std::find(stops.begin(), stops.end(), stop);
  if (it == stops.end()) return std::nullopt;
  return static_cast<std::size_t>(it - stops.begin());
}

double Path::distance_m() const {
  double total = 0.0;
  for (const auto& s : segments) total += s.distance_m;
  return total;
}

std::vector<NodeId> Path::nodes() const {
  std::vector<NodeId> out;
  if (segments.empty()) return out;
  out.reserve(segments.size() + 1);
  out.push_back(segments.front().from);
  for (const auto& s : segments) out.push_back(s.to);
  return out;
}

std::string path_key(const Path& path) {
  std::string key;
  for (const auto& n : path.nodes()) {
    if (!key.empty()) key += '>';
    key += n.str();
  }
  return key;
}

void FlowRecord::validate() const {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::InvalidArgument, "record " + record_id + ": " + why);
  };
  if (record_id.empty()) fail("empty record id");
  if (!is_valid_token(service_id.str())) fail("invalid service id");
  if (!is_valid_token(origin.str()) || !is_valid_token(destination.str())) fail("invalid stop id");
  if (origin == destination) fail("origin equals destination");
  if (!std::isfinite(t_start) || !std::isfinite(t_end) || !(t_end > t_start))
    fail("alight time not after board time");
  if (!std::isfinite(distance_m) || !(distance_m > 0.0)) fail("distance must be positive");
}

const Segment* NetworkGraph::find_segment(const NodeId& from, const NodeId& to) const {
  auto it = segment_index_.find(SegmentKey{from, to});
  return it == segment_index_.end() ? nullptr : &segments_[it->second];
}

const ServiceRoute* NetworkGraph::find_route(const ServiceId& service) const {
  auto it = routes_.find(service);
  return it == routes_.end() ? nullptr : &it->second;
}

bool NetworkGraph::has_node(const NodeId& node) const {
  return std::binary_search(nodes_.begin(), nodes_.end(), node);
}

NetworkGraph build_network(std::span<const ServiceRoute> routes, double distance_tolerance) {
  NetworkGraph g;
  std::set<NodeId> nodes;
  std::map<SegmentKey, double> distances;
  for (const auto& route : routes) {
    route.validate();
    if (g.routes_.count(route.service_id))
      throw Error(ErrorCode::InvalidArgument, "duplicate route for service " + route.service_id.str());
    for (std::size_t i = 0; i < route.stops.size(); ++i) {
      nodes.insert(route.stops[i]);
      if (i == 0) continue;
      SegmentKey key{route.stops[i - 1], route.stops[i]};
      const double d = route.cumulative_m[i] - route.cumulative_m[i - 1];
      auto [it, inserted] = distances.emplace(key, d);
      if (!inserted && std::abs(it->second - d) > distance_tolerance) {
        std::ostringstream os;
        os.precision(17);
        os << "segment " << key.from << ">" << key.to << " has distances " << it->second << " and "
           << d;
        throw Error(ErrorCode::DistanceConflict, os.str());
      }
    }
    g.routes_.emplace(route.service_id, route);
  }
  g.nodes_.assign(nodes.begin(), nodes.end());
  for (const auto& [key, d] : distances) {
    g.segment_index_.emplace(key, g.segments_.size());
    g.segments_.push_back(Segment{key.from, key.to, d});
  }
  return g;
}

Path resolve_path(const NetworkGraph& g, const ServiceId& service, const NodeId& origin,
                  const NodeId& destination) {
  const ServiceRoute* route = g.find_route(service);
  if (!route) throw Error(ErrorCode::UnknownService, "unknown service " + service.str());
  auto from = route->position_of(origin);
  auto to = route->position_of(destination);
  if (!from || !to || origin == destination) {
    throw Error(ErrorCode::StopNotOnRoute, "service " + service.str() + " has no trip " +
                                               origin.str() + ">" + destination.str());
  }
  if (*to < *from) {
    throw Error(ErrorCode::WrongDirection, "service " + service.str() + " visits " +
                                               destination.str() + " before " + origin.str());
  }
  Path p;
  p.segments.reserve(*to - *from);
  for (std::size_t i = *from; i < *to; ++i) {
    const Segment* s = g.find_segment(route->stops[i], route->stops[i + 1]);
    // build_network registers every consecutive pair, so this only fails on a corrupt graph
    if (!s) throw Error(ErrorCode::StopNotOnRoute, "missing segment on service " + service.str());
    p.segments.push_back(*s);
  }
  return p;
}

Path validate_record(const NetworkGraph& g, const FlowRecord& r, double distance_tolerance) {
  r.validate();
  Path p = resolve_path(g, r.service_id, r.origin, r.destination);
  const double d = p.distance_m();
  if (std::abs(d - r.distance_m) > distance_tolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "record " << r.record_id << ": path distance " << d << " but record says "
       << r.distance_m;
    throw Error(ErrorCode::DistanceMismatch, os.str());
  }
  return p;
}

}  // namespace flowanom
