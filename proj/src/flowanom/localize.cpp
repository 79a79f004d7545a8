#include "flowanom/localize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>

#include "flowanom/error.hpp"

namespace flowanom {

namespace {

// Position of `inner`'s node run inside `outer`, if it occurs contiguously.
bool contiguous_subsequence(const std::vector<NodeId>& outer, const std::vector<NodeId>& inner) {
  if (inner.empty() || inner.size() > outer.size()) return false;
  auto it = std::find(outer.begin(), outer.end(), inner.front());
  if (it == outer.end()) return false;
  const auto start = static_cast<std::size_t>(it - outer.begin());
  if (start + inner.size() > outer.size()) return false;
  return std::equal(inner.begin(), inner.end(), outer.begin() + static_cast<std::ptrdiff_t>(start));
}

bool time_nested(const FlowRecord& outer, const FlowRecord& inner) {
  return outer.t_start < inner.t_start && outer.t_end > inner.t_end;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

void DetectConfig::validate() const {
  if (delta_override) {
    if (!std::isfinite(*delta_override))
      throw Error(ErrorCode::InvalidArgument, "delta override must be finite");
    return;
  }
  if (!(delta_quantile > 0.0 && delta_quantile < 1.0))
    throw Error(ErrorCode::InvalidArgument, "delta quantile must lie in (0,1)");
}

const char* provenance_name(Provenance p) {
  return p == Provenance::InnermostWitness ? "innermost-witness" : "self";
}

std::vector<ScoredRecord> score(const Model& model, std::span<const Observation> obs) {
  const double sigma2 = sigma2_of(model);
  if (!(sigma2 > 0.0)) {
    throw Error(ErrorCode::ZeroVariance, "model variance is zero; deviation ratios are undefined");
  }
  const double sigma = std::sqrt(sigma2);
  std::vector<ScoredRecord> out;
  out.reserve(obs.size());
  for (const auto& o : obs) {
    ScoredRecord s{o.record, o.path, 0.0, 0.0};
    s.expected_s = expected_time(model, o.path, o.record.distance_m);
    s.alpha = (o.record.observed_s() - s.expected_s) / (sigma * std::sqrt(o.record.distance_m));
    out.push_back(std::move(s));
  }
  return out;
}

FilterResult filter_significant(std::span<const ScoredRecord> scored, const DetectConfig& cfg) {
  cfg.validate();
  FilterResult out;
  if (scored.empty()) return out;
  if (cfg.delta_override) {
    out.delta = *cfg.delta_override;
  } else {
    std::vector<double> alphas;
    alphas.reserve(scored.size());
    for (const auto& s : scored) alphas.push_back(s.alpha);
    std::sort(alphas.begin(), alphas.end());
    // nearest rank; the epsilon keeps 0.99 * 100 from rounding up to 100
    const double exact = (1.0 - cfg.delta_quantile) * static_cast<double>(alphas.size());
    auto rank = static_cast<std::size_t>(std::ceil(exact - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, alphas.size());
    out.delta = alphas[rank - 1];
  }
  for (const auto& s : scored)
    if (s.alpha > out.delta) out.records.push_back(s);
  return out;
}

bool contains(const ScoredRecord& outer, const ScoredRecord& inner) {
  if (!time_nested(outer.record, inner.record)) return false;
  return contiguous_subsequence(outer.path.nodes(), inner.path.nodes());
}

std::vector<std::size_t> containment_counts(std::span<const ScoredRecord> filtered) {
  const std::size_t n = filtered.size();
  std::vector<std::vector<NodeId>> nodes;
  nodes.reserve(n);
  for (const auto& s : filtered) nodes.push_back(s.path.nodes());

  // sweep by start time: only records that board earlier can contain
  std::vector<std::size_t> by_start(n);
  std::iota(by_start.begin(), by_start.end(), std::size_t{0});
  std::stable_sort(by_start.begin(), by_start.end(), [&](std::size_t a, std::size_t b) {
    return filtered[a].record.t_start < filtered[b].record.t_start;
  });

  std::vector<std::size_t> counts(n, 0);
  for (std::size_t bi = 0; bi < n; ++bi) {
    const std::size_t i = by_start[bi];
    for (std::size_t bj = 0; bj < bi; ++bj) {
      const std::size_t j = by_start[bj];
      if (time_nested(filtered[j].record, filtered[i].record) &&
          contiguous_subsequence(nodes[j], nodes[i])) {
        ++counts[i];
      }
    }
  }
  return counts;
}

std::vector<std::size_t> rank_anomalies(std::span<const ScoredRecord> filtered,
                                        std::span<const std::size_t> counts) {
  if (counts.size() != filtered.size())
    throw Error(ErrorCode::InvalidArgument, "containment counts do not cover the filtered set");
  std::vector<std::size_t> order(filtered.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    if (filtered[a].alpha != filtered[b].alpha) return filtered[a].alpha > filtered[b].alpha;
    return filtered[a].record.record_id < filtered[b].record.record_id;
  });
  return order;
}

Localization localize(std::size_t outer, std::span<const ScoredRecord> filtered) {
  if (outer >= filtered.size())
    throw Error(ErrorCode::InvalidArgument, "record to localize is not in the filtered set");
  const ScoredRecord& r_outer = filtered[outer];

  std::vector<std::size_t> within;
  for (std::size_t i = 0; i < filtered.size(); ++i)
    if (i != outer && contains(r_outer, filtered[i])) within.push_back(i);

  Localization loc;
  if (within.empty()) {
    loc.provenance = Provenance::Self;
    for (const auto& s : r_outer.path.segments)
      loc.segments.push_back({s, r_outer.record.t_start, r_outer.record.t_end});
    return loc;
  }

  // Anything within the outer record that holds no further significant
  // record. Containment is transitive, so those candidates are all in `within`.
  loc.provenance = Provenance::InnermostWitness;
  const auto outer_nodes = r_outer.path.nodes();
  std::map<std::size_t, LocalizedSegment> by_position;
  for (std::size_t w : within) {
    const bool innermost = std::none_of(within.begin(), within.end(), [&](std::size_t o) {
      return o != w && contains(filtered[w], filtered[o]);
    });
    if (!innermost) continue;
    const auto& rec = filtered[w].record;
    for (const auto& s : filtered[w].path.segments) {
      const auto pos = static_cast<std::size_t>(
          std::find(outer_nodes.begin(), outer_nodes.end(), s.from) - outer_nodes.begin());
      auto [it, inserted] = by_position.emplace(pos, LocalizedSegment{s, rec.t_start, rec.t_end});
      if (!inserted) {
        it->second.window_start = std::min(it->second.window_start, rec.t_start);
        it->second.window_end = std::max(it->second.window_end, rec.t_end);
      }
    }
  }
  for (auto& [pos, ls] : by_position) loc.segments.push_back(std::move(ls));
  return loc;
}

std::vector<AnomalyReport> build_reports(std::span<const ScoredRecord> filtered) {
  const auto counts = containment_counts(filtered);
  const auto order = rank_anomalies(filtered, counts);
  std::vector<AnomalyReport> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back({filtered[i], counts[i], localize(i, filtered)});
  return out;
}

std::string utc_date(double epoch_seconds) {
  using namespace std::chrono;
  const auto day = static_cast<long>(std::floor(epoch_seconds / 86400.0));
  const year_month_day ymd{sys_days{days{day}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::vector<DailyRow> daily_series(std::span<const AnomalyReport> reports) {
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_day;
  for (const auto& r : reports) {
    auto& [counts, alphas] = by_day[utc_date(r.scored.record.t_start)];
    counts.push_back(static_cast<double>(r.containment_count));
    alphas.push_back(r.scored.alpha);
  }
  std::vector<DailyRow> out;
  for (const auto& [date, series] : by_day) {
    const auto& [counts, alphas] = series;
    DailyRow row;
    row.date = date;
    row.n = counts.size();
    row.mean_count = std::accumulate(counts.begin(), counts.end(), 0.0) / row.n;
    row.mean_alpha = std::accumulate(alphas.begin(), alphas.end(), 0.0) / row.n;
    row.median_count = median(counts);
    row.median_alpha = median(alphas);
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace flowanom
