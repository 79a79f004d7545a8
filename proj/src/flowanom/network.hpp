#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flowanom {

// Opaque identifier with a tag so node and service ids cannot be mixed up.
template <typename Tag>
struct Token {
  std::string value;

  Token() = default;
  explicit Token(std::string v) : value(std::move(v)) {}

  bool empty() const noexcept { return value.empty(); }
  const std::string& str() const noexcept { return value; }

  friend auto operator<=>(const Token&, const Token&) = default;
  friend bool operator==(const Token&, const Token&) = default;
  friend std::ostream& operator<<(std::ostream& os, const Token& t) { return os << t.value; }
};

using NodeId = Token<struct NodeTag>;
using ServiceId = Token<struct ServiceTag>;

// Distance tolerance used when comparing distances from different sources.
inline constexpr double kDefaultDistanceTolerance = 1.0;

bool is_valid_token(const std::string& s);

struct SegmentKey {
  NodeId from;
  NodeId to;

  friend auto operator<=>(const SegmentKey&, const SegmentKey&) = default;
  friend bool operator==(const SegmentKey&, const SegmentKey&) = default;
};

struct Segment {
  NodeId from;
  NodeId to;
  double distance_m = 0.0;

  SegmentKey key() const { return {from, to}; }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ServiceRoute {
  ServiceId service_id;
  std::vector<NodeId> stops;
  std::vector<double> cumulative_m;

  // Throws InvalidArgument when the route is not a simple linear route.
  void validate() const;
  std::optional<std::size_t> position_of(const NodeId& stop) const;
};

struct Path {
  std::vector<Segment> segments;

  double distance_m() const;
  // origin followed by the head of every segment
  std::vector<NodeId> nodes() const;
  bool empty() const noexcept { return segments.empty(); }
};

// Canonical key of the node sequence a path visits, e.g. "a>b>c".
std::string path_key(const Path& path);

struct FlowRecord {
  std::string record_id;
  ServiceId service_id;
  NodeId origin;
  NodeId destination;
  double t_start = 0.0;  // epoch seconds
  double t_end = 0.0;
  double distance_m = 0.0;

  double observed_s() const noexcept { return t_end - t_start; }
  // Throws InvalidArgument on a violated record invariant.
  void validate() const;
};

// Immutable once built.
class NetworkGraph {
 public:
  NetworkGraph() = default;

  const std::vector<NodeId>& nodes() const noexcept { return nodes_; }
  const std::vector<Segment>& segments() const noexcept { return segments_; }
  const std::map<ServiceId, ServiceRoute>& routes() const noexcept { return routes_; }

  const Segment* find_segment(const NodeId& from, const NodeId& to) const;
  const ServiceRoute* find_route(const ServiceId& service) const;
  bool has_node(const NodeId& node) const;

 private:
  friend NetworkGraph build_network(std::span<const ServiceRoute>, double);

  std::vector<NodeId> nodes_;
  std::vector<Segment> segments_;
  std::map<SegmentKey, std::size_t> segment_index_;
  std::map<ServiceId, ServiceRoute> routes_;
};

NetworkGraph build_network(std::span<const ServiceRoute> routes,
                           double distance_tolerance = kDefaultDistanceTolerance);

Path resolve_path(const NetworkGraph& g, const ServiceId& service, const NodeId& origin,
                  const NodeId& destination);

Path validate_record(const NetworkGraph& g, const FlowRecord& r,
                     double distance_tolerance = kDefaultDistanceTolerance);

}  // namespace flowanom
