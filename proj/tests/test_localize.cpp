#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "flowanom/error.hpp"
#include "flowanom/localize.hpp"
#include "oracles.hpp"

using namespace flowanom;
using fixture::record;

namespace {

constexpr double kTen = 1323943200.0;  // 2011-12-15T10:00:00Z

ScoredRecord sr(const NetworkGraph& g, const std::string& id, const std::string& from,
                const std::string& to, double t0, double t1, double alpha = 1.0) {
  ScoredRecord s;
  s.path = resolve_path(g, ServiceId("s1"), NodeId(from), NodeId(to));
  s.record = record(id, "s1", from, to, t0, t1, s.path.distance_m());
  s.alpha = alpha;
  return s;
}

// A->D contains B->D contains B->C... built on a longer route
NetworkGraph long_route() {
  return build_network(std::vector{
      fixture::route("s1", {"a", "b", "c", "d", "e", "f"}, {0, 100, 300, 600, 1000, 1500})});
}

std::vector<ScoredRecord> dolls(const NetworkGraph& g) {
  return {sr(g, "outer", "a", "f", kTen, kTen + 1800, 2.0),
          sr(g, "middle", "b", "e", kTen + 60, kTen + 1500, 2.5),
          sr(g, "inner", "c", "d", kTen + 300, kTen + 600, 3.0)};
}

}  // namespace

TEST_CASE("score computes the deviation ratio") {
  const auto g = build_network(std::vector{fixture::route("s1", {"a", "b"}, {0, 300})});
  const auto obs = observe(g, std::vector{record("r", "s1", "a", "b", 0, 30, 300),
                                          record("q", "s1", "a", "b", 0, 20, 300),
                                          record("p", "s1", "a", "b", 0, 10, 300)});
  const Model m = Baseline1Model{15.0, 1.0};
  const auto s = score(m, obs);
  CHECK(s[0].expected_s == 20.0);
  CHECK(s[0].alpha == doctest::Approx(10 / std::sqrt(300.0)).epsilon(1e-12));
  CHECK(s[1].alpha == 0.0);
  CHECK(s[2].alpha < 0);
  CHECK_THROWS_AS(score(Model{Baseline1Model{15.0, 0.0}}, obs), Error);
}

TEST_CASE("filter_significant") {
  const auto g = long_route();
  std::vector<ScoredRecord> rs;
  for (int k = 0; k < 100; ++k) rs.push_back(sr(g, "r" + std::to_string(k), "a", "b", 0, 10, (k - 30.5) * 0.1));
  std::shuffle(rs.begin(), rs.end(), std::mt19937_64(1));
  DetectConfig cfg;
  auto top = filter_significant(rs, cfg);
  REQUIRE(top.records.size() == 1);
  CHECK(top.records[0].record.record_id == "r99");

  cfg.delta_override = 0.0;
  auto pos = filter_significant(rs, cfg);
  CHECK(pos.delta == 0.0);
  CHECK(std::all_of(pos.records.begin(), pos.records.end(), [](auto& s) { return s.alpha > 0; }));
  CHECK(pos.records.size() == 69);

  for (auto& s : rs) s.alpha = 1.5;
  CHECK(filter_significant(rs, DetectConfig{}).records.empty());
  CHECK(filter_significant({}, DetectConfig{}).records.empty());

  DetectConfig bad;
  bad.delta_quantile = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("contains") {
  const auto g = fixture::abcd();
  const auto outer = sr(g, "o", "a", "d", kTen, kTen + 1200);
  const auto inner = sr(g, "i", "b", "c", kTen + 300, kTen + 600);
  CHECK(contains(outer, inner));
  CHECK_FALSE(contains(inner, outer));
  CHECK_FALSE(contains(outer, sr(g, "i", "b", "c", kTen - 60, kTen + 600)));
  CHECK_FALSE(contains(outer, outer));
  CHECK_FALSE(contains(outer, sr(g, "i", "b", "c", kTen, kTen + 600)));
}

TEST_CASE("containment_counts on fixtures") {
  const auto g = long_route();
  auto d = dolls(g);
  CHECK(containment_counts(d) == std::vector<std::size_t>{0, 1, 2});
  std::vector<ScoredRecord> disjoint{sr(g, "x", "a", "b", 0, 100), sr(g, "y", "c", "d", 10, 50),
                                     sr(g, "z", "e", "f", 20, 30)};
  CHECK(containment_counts(disjoint) == std::vector<std::size_t>{0, 0, 0});
  CHECK(containment_counts(std::span(d).first(1)) == std::vector<std::size_t>{0});
  CHECK(containment_counts({}).empty());
}

TEST_CASE("containment_counts matches brute force") {
  std::vector<std::string> stops;
  std::vector<double> cum;
  for (int i = 0; i < 30; ++i) {
    stops.push_back("n" + std::to_string(i));
    cum.push_back(i * 250.0);
  }
  const auto r = fixture::route("s1", stops, cum);
  const auto g = build_network(std::vector{r});
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    const auto rs = fixture::random_scored(rng, 1 + rng() % 500, g, r);
    CHECK(containment_counts(rs) == oracle::containment_counts(rs));
  }
}

TEST_CASE("containment is a strict partial order") {
  std::vector<std::string> stops;
  std::vector<double> cum;
  for (int i = 0; i < 8; ++i) {
    stops.push_back("n" + std::to_string(i));
    cum.push_back(i * 100.0);
  }
  const auto r = fixture::route("s1", stops, cum);
  const auto g = build_network(std::vector{r});
  std::mt19937_64 rng(8);
  const auto pool = fixture::random_scored(rng, 300, g, r);
  int chains = 0;
  for (int k = 0; k < 10000; ++k) {
    const auto& x = pool[rng() % pool.size()];
    const auto& y = pool[rng() % pool.size()];
    const auto& z = pool[rng() % pool.size()];
    CHECK_FALSE(contains(x, x));
    CHECK_FALSE((contains(x, y) && contains(y, x)));
    if (contains(x, y) && contains(y, z)) {
      ++chains;
      CHECK(contains(x, z));
    }
  }
  CHECK(chains > 0);
}

TEST_CASE("raising delta never raises a count") {
  std::vector<std::string> stops;
  std::vector<double> cum;
  for (int i = 0; i < 12; ++i) {
    stops.push_back("n" + std::to_string(i));
    cum.push_back(i * 100.0);
  }
  const auto r = fixture::route("s1", stops, cum);
  const auto g = build_network(std::vector{r});
  std::mt19937_64 rng(21);
  const auto rs = fixture::random_scored(rng, 400, g, r);
  std::map<std::string, std::size_t> prev;
  for (double delta : {0.5, 1.0, 2.0, 3.0, 4.0}) {
    DetectConfig cfg;
    cfg.delta_override = delta;
    const auto f = filter_significant(rs, cfg).records;
    const auto counts = containment_counts(f);
    for (std::size_t i = 0; i < f.size(); ++i) {
      if (prev.count(f[i].record.record_id)) CHECK(counts[i] <= prev[f[i].record.record_id]);
      prev[f[i].record.record_id] = counts[i];
    }
  }
}

TEST_CASE("scaling times and sigma together leaves the ranking unchanged") {
  const auto g = build_network(std::vector{
      fixture::route("s1", {"a", "b", "c", "d", "e"}, {0, 200, 500, 900, 1400})});
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  const char* st[] = {"a", "b", "c", "d", "e"};
  std::vector<FlowRecord> rs;
  for (int k = 0; k < 200; ++k) {
    std::size_t i = rng() % 5, j = rng() % 5;
    while (i == j) j = rng() % 5;
    if (i > j) std::swap(i, j);
    const auto p = resolve_path(g, ServiceId("s1"), NodeId(st[i]), NodeId(st[j]));
    const double t0 = std::floor(3600 * u(rng));
    rs.push_back(record("r" + std::to_string(k), "s1", st[i], st[j], t0,
                        t0 + p.distance_m() / 10 * u(rng), p.distance_m()));
  }
  const double k = 3.0;
  auto scaled = rs;
  for (auto& r : scaled) {
    r.t_start *= k;
    r.t_end *= k;
  }
  // times x k, sigma x k: speed / k and sigma^2 x k^2
  const auto a = score(Model{Baseline1Model{10.0, 4.0}}, observe(g, rs));
  const auto b = score(Model{Baseline1Model{10.0 / k, 4.0 * k * k}}, observe(g, scaled));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].alpha == doctest::Approx(b[i].alpha));
  DetectConfig cfg;
  cfg.delta_quantile = 0.3;
  const auto ra = build_reports(filter_significant(a, cfg).records);
  const auto rb = build_reports(filter_significant(b, cfg).records);
  REQUIRE(ra.size() == rb.size());
  for (std::size_t i = 0; i < ra.size(); ++i)
    CHECK(ra[i].scored.record.record_id == rb[i].scored.record.record_id);
}

TEST_CASE("rank_anomalies tie-breaks") {
  const auto g = fixture::abcd();
  std::vector<ScoredRecord> rs{sr(g, "r2", "a", "b", 0, 10, 1.0), sr(g, "r1", "a", "b", 0, 10, 1.0)};
  std::vector<std::size_t> counts{2, 5};
  CHECK(rank_anomalies(rs, counts) == std::vector<std::size_t>{1, 0});
  counts = {3, 3};
  rs[0].alpha = 3.0;
  rs[1].alpha = 2.0;
  CHECK(rank_anomalies(rs, counts) == std::vector<std::size_t>{0, 1});
  rs[0].alpha = 2.0;
  CHECK(rank_anomalies(rs, counts) == std::vector<std::size_t>{1, 0});
}

TEST_CASE("localize") {
  const auto g = long_route();
  const auto d = dolls(g);
  auto loc = localize(0, d);
  CHECK(loc.provenance == Provenance::InnermostWitness);
  REQUIRE(loc.segments.size() == 1);
  CHECK(loc.segments[0].segment.key() == SegmentKey{NodeId("c"), NodeId("d")});
  CHECK(loc.segments[0].window_start == kTen + 300);
  CHECK(loc.segments[0].window_end == kTen + 600);

  loc = localize(2, d);
  CHECK(loc.provenance == Provenance::Self);
  REQUIRE(loc.segments.size() == 1);
  CHECK(loc.segments[0].window_start == kTen + 300);

  std::vector<ScoredRecord> two{sr(g, "o", "a", "f", kTen, kTen + 1800),
                                sr(g, "w1", "a", "b", kTen + 10, kTen + 100),
                                sr(g, "w2", "d", "f", kTen + 900, kTen + 1500)};
  loc = localize(0, two);
  REQUIRE(loc.segments.size() == 3);
  CHECK(loc.segments[0].segment.key() == SegmentKey{NodeId("a"), NodeId("b")});
  CHECK(loc.segments[1].segment.key() == SegmentKey{NodeId("d"), NodeId("e")});
  CHECK(loc.segments[2].segment.key() == SegmentKey{NodeId("e"), NodeId("f")});
  CHECK(loc.segments[2].window_start == kTen + 900);
}

TEST_CASE("build_reports ranks and counts") {
  const auto g = long_route();
  const auto reports = build_reports(dolls(g));
  REQUIRE(reports.size() == 3);
  CHECK(reports[0].scored.record.record_id == "inner");
  CHECK(reports[0].containment_count == 2);
  CHECK(reports[2].scored.record.record_id == "outer");
  CHECK(std::string(provenance_name(reports[2].localization.provenance)) == "innermost-witness");
}

TEST_CASE("daily_series") {
  const auto g = long_route();
  auto mk = [&](const std::string& id, double t0, std::size_t count, double alpha) {
    AnomalyReport r;
    r.scored = sr(g, id, "a", "b", t0, t0 + 60, alpha);
    r.containment_count = count;
    return r;
  };
  CHECK(utc_date(kTen) == "2011-12-15");
  CHECK(utc_date(kTen + 14 * 3600) == "2011-12-16");
  std::vector<AnomalyReport> one{mk("a", kTen, 0, 1), mk("b", kTen + 60, 2, 2), mk("c", kTen + 90, 4, 6)};
  auto rows = daily_series(one);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].mean_count == 2);
  CHECK(rows[0].median_count == 2);
  CHECK(rows[0].mean_alpha == 3);
  CHECK(rows[0].median_alpha == 2);
  CHECK(rows[0].n == 3);

  std::vector<AnomalyReport> two{mk("x", kTen + 86400 * 2, 1, 1), mk("y", kTen, 3, 1)};
  rows = daily_series(two);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].date == "2011-12-15");
  CHECK(rows[1].date == "2011-12-17");
  CHECK(daily_series({}).empty());
}
