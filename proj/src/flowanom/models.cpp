#include "flowanom/models.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "flowanom/error.hpp"

namespace flowanom {

namespace {

double speed_of(const EdgeModel& m, const Segment& s) {
  auto it = m.c_by_segment.find(s.key());
  if (it == m.c_by_segment.end()) {
    throw Error(ErrorCode::MissingSegmentSpeed,
                "no speed for segment " + s.from.str() + ">" + s.to.str());
  }
  return it->second;
}

void require_nonempty(std::span<const Observation> obs, const char* what) {
  if (obs.empty()) throw Error(ErrorCode::EmptyInput, std::string(what) + ": no records");
}

// Observations rewritten against a dense speed vector so an epoch does no
// map lookups.
struct CompiledSet {
  struct Sample {
    double distance = 0.0;
    double observed = 0.0;
    std::vector<std::size_t> segs;
    std::vector<double> seg_d;
  };

  std::vector<SegmentKey> keys;
  std::vector<double> speed;
  std::vector<Sample> samples;

  CompiledSet(const EdgeModel& m, std::span<const Observation> obs) {
    std::map<SegmentKey, std::size_t> index;
    for (const auto& [key, c] : m.c_by_segment) {
      index.emplace(key, keys.size());
      keys.push_back(key);
      speed.push_back(c);
    }
    samples.reserve(obs.size());
    for (const auto& o : obs) {
      Sample s;
      s.distance = o.record.distance_m;
      s.observed = o.record.observed_s();
      for (const auto& seg : o.path.segments) {
        auto it = index.find(seg.key());
        if (it == index.end()) {
          throw Error(ErrorCode::MissingSegmentSpeed,
                      "no speed for segment " + seg.from.str() + ">" + seg.to.str());
        }
        s.segs.push_back(it->second);
        s.seg_d.push_back(seg.distance_m);
      }
      samples.push_back(std::move(s));
    }
  }

  double expected(const Sample& s) const {
    double t = 0.0;
    for (std::size_t k = 0; k < s.segs.size(); ++k) t += s.seg_d[k] / speed[s.segs[k]];
    return t;
  }

  double sse() const {
    double total = 0.0;
    for (const auto& s : samples) {
      const double r = expected(s) - s.observed;
      total += r * r;
    }
    return total;
  }

  double variance() const {
    double num = 0.0, den = 0.0;
    for (const auto& s : samples) {
      const double r = s.observed - expected(s);
      num += r * r;
      den += s.distance;
    }
    return num / den;
  }

  void step(const Sample& s, double sigma2, const TrainConfig& cfg, bool smoothed,
            std::vector<double>& grad) {
    const std::size_t n = s.segs.size();
    const double k = (s.observed - expected(s)) / (s.distance * sigma2);
    grad.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double c = speed[s.segs[i]];
      double g = -k * s.seg_d[i] / (c * c) + cfg.tau / c;
      if (smoothed) {
        if (i + 1 < n) g -= cfg.psi * (c - speed[s.segs[i + 1]]);
        if (i > 0) g += cfg.psi * (speed[s.segs[i - 1]] - c);
      }
      grad[i] = g;
    }
    for (std::size_t i = 0; i < n; ++i) {
      double& c = speed[s.segs[i]];
      c = std::max(cfg.c_min, c + cfg.eta * grad[i]);
    }
  }

  void write_back(EdgeModel& m) const {
    for (std::size_t i = 0; i < keys.size(); ++i) m.c_by_segment[keys[i]] = speed[i];
  }
};

double run_epoch(CompiledSet& set, EdgeModel& m, const TrainConfig& cfg,
                 std::uint64_t epoch_index) {
  std::vector<std::size_t> order(set.samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.shuffle_seed),
                    static_cast<std::uint32_t>(cfg.shuffle_seed >> 32),
                    static_cast<std::uint32_t>(epoch_index),
                    static_cast<std::uint32_t>(epoch_index >> 32)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);

  const double sigma2 = std::max(m.sigma2, cfg.sigma2_floor);
  std::vector<double> grad;
  for (std::size_t idx : order) set.step(set.samples[idx], sigma2, cfg, m.smoothed, grad);

  set.write_back(m);
  if (cfg.variance_refresh) m.sigma2 = set.variance();
  return set.sse();
}

}  // namespace

std::vector<Observation> observe(const NetworkGraph& g, std::span<const FlowRecord> records,
                                 double distance_tolerance) {
  std::vector<Observation> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back({r, validate_record(g, r, distance_tolerance)});
  return out;
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& why) { throw Error(ErrorCode::InvalidArgument, why); };
  if (!(eta > 0.0)) fail("eta must be positive");
  if (!(tau >= 0.0)) fail("tau must be non-negative");
  if (!(psi >= 0.0)) fail("psi must be non-negative");
  if (epochs < 1) fail("epochs must be at least 1");
  if (!(c_min > 0.0)) fail("c_min must be positive");
  if (!(sigma2_floor > 0.0)) fail("sigma2_floor must be positive");
}

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Baseline1: return "baseline1";
    case ModelKind::Baseline2: return "baseline2";
    case ModelKind::Edge: return "edge";
    case ModelKind::SmoothedEdge: return "smoothed";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  for (auto k : {ModelKind::Baseline1, ModelKind::Baseline2, ModelKind::Edge,
                 ModelKind::SmoothedEdge}) {
    if (name == model_kind_name(k)) return k;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model kind '" + name + "'");
}

ModelKind kind_of(const Model& model) {
  if (std::holds_alternative<Baseline1Model>(model)) return ModelKind::Baseline1;
  if (std::holds_alternative<Baseline2Model>(model)) return ModelKind::Baseline2;
  return std::get<EdgeModel>(model).smoothed ? ModelKind::SmoothedEdge : ModelKind::Edge;
}

double sigma2_of(const Model& model) {
  return std::visit([](const auto& m) { return m.sigma2; }, model);
}

Baseline1Model fit_baseline1(std::span<const Observation> obs) {
  require_nonempty(obs, "baseline1");
  double sum_d = 0.0, sum_t = 0.0;
  for (const auto& o : obs) {
    sum_d += o.record.distance_m;
    sum_t += o.record.observed_s();
  }
  Baseline1Model m;
  m.c = sum_d / sum_t;
  double num = 0.0;
  for (const auto& o : obs) {
    const double r = o.record.observed_s() - o.record.distance_m / m.c;
    num += r * r;
  }
  m.sigma2 = num / sum_d;
  return m;
}

Baseline2Model fit_baseline2(std::span<const Observation> obs) {
  require_nonempty(obs, "baseline2");
  std::map<std::string, std::pair<double, double>> sums;  // key -> (sum d, sum t)
  double total_d = 0.0, total_t = 0.0;
  for (const auto& o : obs) {
    auto& s = sums[path_key(o.path)];
    s.first += o.record.distance_m;
    s.second += o.record.observed_s();
    total_d += o.record.distance_m;
    total_t += o.record.observed_s();
  }
  Baseline2Model m;
  m.fallback_c = total_d / total_t;
  for (const auto& [key, s] : sums) m.c_by_path.emplace(key, s.first / s.second);
  double num = 0.0;
  for (const auto& o : obs) {
    const double r = o.record.observed_s() - o.record.distance_m / m.c_by_path.at(path_key(o.path));
    num += r * r;
  }
  m.sigma2 = num / total_d;
  return m;
}

double expected_time(const Baseline1Model& m, const Path&, double distance_m) {
  return distance_m / m.c;
}

double expected_time(const Baseline2Model& m, const Path& path, double distance_m) {
  auto it = m.c_by_path.find(path_key(path));
  return distance_m / (it == m.c_by_path.end() ? m.fallback_c : it->second);
}

double expected_time(const EdgeModel& m, const Path& path, double) {
  double t = 0.0;
  for (const auto& s : path.segments) t += s.distance_m / speed_of(m, s);
  return t;
}

double expected_time(const Model& m, const Path& path, double distance_m) {
  return std::visit([&](const auto& v) { return expected_time(v, path, distance_m); }, m);
}

double log_likelihood(const EdgeModel& m, const Observation& o, const TrainConfig& cfg) {
  if (!(m.sigma2 > 0.0)) {
    throw Error(ErrorCode::NonPositiveVariance, "log likelihood needs a positive variance");
  }
  const double d = o.record.distance_m;
  const double resid = o.record.observed_s() - expected_time(m, o.path, d);
  double ll = -0.5 * std::log(d * m.sigma2) - resid * resid / (2.0 * d * m.sigma2);
  double barrier = 0.0;
  for (const auto& s : o.path.segments) barrier += std::log(speed_of(m, s));
  ll += cfg.tau * barrier;
  if (m.smoothed) {
    double penalty = 0.0;
    for (std::size_t k = 0; k + 1 < o.path.segments.size(); ++k) {
      const double diff = speed_of(m, o.path.segments[k]) - speed_of(m, o.path.segments[k + 1]);
      penalty += diff * diff;
    }
    ll -= 0.5 * cfg.psi * penalty;
  }
  return ll;
}

double gradient(const EdgeModel& m, const Observation& o, const SegmentKey& seg,
                const TrainConfig& cfg) {
  const auto& segs = o.path.segments;
  auto it = std::find_if(segs.begin(), segs.end(), [&](const Segment& s) { return s.key() == seg; });
  if (it == segs.end()) {
    throw Error(ErrorCode::SegmentNotOnPath, "segment " + seg.from.str() + ">" + seg.to.str() +
                                                 " is not on the path of " + o.record.record_id);
  }
  if (!(m.sigma2 > 0.0)) {
    throw Error(ErrorCode::NonPositiveVariance, "gradient needs a positive variance");
  }
  const std::size_t k = static_cast<std::size_t>(it - segs.begin());
  const double d = o.record.distance_m;
  const double resid = o.record.observed_s() - expected_time(m, o.path, d);
  const double c = speed_of(m, *it);
  double g = -(resid / (d * m.sigma2)) * (it->distance_m / (c * c)) + cfg.tau / c;
  if (m.smoothed) {
    if (k + 1 < segs.size()) g -= cfg.psi * (c - speed_of(m, segs[k + 1]));
    if (k > 0) g += cfg.psi * (speed_of(m, segs[k - 1]) - c);
  }
  return g;
}

EdgeModel init_edge_model(const NetworkGraph& g, std::span<const Observation> obs, bool smoothed) {
  const Baseline1Model b1 = fit_baseline1(obs);
  EdgeModel m;
  m.smoothed = smoothed;
  m.sigma2 = b1.sigma2;
  for (const auto& s : g.segments()) m.c_by_segment.emplace(s.key(), b1.c);
  return m;
}

double estimate_variance(const EdgeModel& m, std::span<const Observation> obs) {
  require_nonempty(obs, "estimate_variance");
  double num = 0.0, den = 0.0;
  for (const auto& o : obs) {
    const double r = o.record.observed_s() - expected_time(m, o.path, o.record.distance_m);
    num += r * r;
    den += o.record.distance_m;
  }
  return num / den;
}

double estimate_variance(const Model& m, std::span<const Observation> obs) {
  require_nonempty(obs, "estimate_variance");
  double num = 0.0, den = 0.0;
  for (const auto& o : obs) {
    const double r = o.record.observed_s() - expected_time(m, o.path, o.record.distance_m);
    num += r * r;
    den += o.record.distance_m;
  }
  return num / den;
}

double sgd_epoch(EdgeModel& m, std::span<const Observation> obs, const TrainConfig& cfg,
                 std::uint64_t epoch_index) {
  cfg.validate();
  require_nonempty(obs, "sgd_epoch");
  CompiledSet set(m, obs);
  return run_epoch(set, m, cfg, epoch_index);
}

TrainReport train_edge(EdgeModel& m, std::span<const Observation> obs, const TrainConfig& cfg,
                       const EpochCallback& on_epoch) {
  cfg.validate();
  require_nonempty(obs, "train");
  CompiledSet set(m, obs);
  TrainReport report;
  std::vector<bool> touched(set.keys.size(), false);
  for (const auto& s : set.samples)
    for (std::size_t idx : s.segs) touched[idx] = true;
  for (std::size_t i = 0; i < touched.size(); ++i)
    if (!touched[i]) report.untouched.push_back(set.keys[i]);

  for (int e = 0; e < cfg.epochs; ++e) {
    const double sse = run_epoch(set, m, cfg, static_cast<std::uint64_t>(e));
    EpochStats stats{e + 1, sse, m.sigma2};
    report.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return report;
}

Model fit_model(ModelKind kind, const NetworkGraph& g, std::span<const Observation> obs,
                const TrainConfig& cfg, TrainReport* report, const EpochCallback& on_epoch) {
  switch (kind) {
    case ModelKind::Baseline1: return fit_baseline1(obs);
    case ModelKind::Baseline2: return fit_baseline2(obs);
    case ModelKind::Edge:
    case ModelKind::SmoothedEdge: {
      cfg.validate();
      EdgeModel m = init_edge_model(g, obs, kind == ModelKind::SmoothedEdge);
      TrainReport r = train_edge(m, obs, cfg, on_epoch);
      if (report) *report = std::move(r);
      return m;
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown model kind");
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, std::size_t line) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || s.empty()) {
    throw Error(ErrorCode::Parse, "model line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

void save_model(const Model& model, std::ostream& os) {
  os << "model " << model_kind_name(kind_of(model)) << " sigma2=" << fmt17(sigma2_of(model)) << '\n';
  if (const auto* b1 = std::get_if<Baseline1Model>(&model)) {
    os << "global " << fmt17(b1->c) << '\n';
  } else if (const auto* b2 = std::get_if<Baseline2Model>(&model)) {
    os << "global " << fmt17(b2->fallback_c) << '\n';
    for (const auto& [key, c] : b2->c_by_path) os << "path " << key << ' ' << fmt17(c) << '\n';
  } else {
    for (const auto& [key, c] : std::get<EdgeModel>(model).c_by_segment)
      os << "seg " << key.from << ' ' << key.to << ' ' << fmt17(c) << '\n';
  }
}

Model load_model(std::istream& is) {
  std::string line;
  std::size_t lineno = 0;
  auto next_line = [&]() -> bool {
    while (std::getline(is, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return true;
    }
    return false;
  };
  if (!next_line()) throw Error(ErrorCode::Parse, "model file is empty");

  std::istringstream header(line);
  std::string tag, kind_name, sigma_field;
  header >> tag >> kind_name >> sigma_field;
  if (tag != "model" || sigma_field.rfind("sigma2=", 0) != 0) {
    throw Error(ErrorCode::Parse, "model header must read 'model <kind> sigma2=<float>'");
  }
  const ModelKind kind = parse_model_kind(kind_name);
  const double sigma2 = parse_double(sigma_field.substr(7), lineno);

  Baseline1Model b1{0.0, sigma2};
  Baseline2Model b2;
  b2.sigma2 = sigma2;
  EdgeModel edge;
  edge.sigma2 = sigma2;
  edge.smoothed = kind == ModelKind::SmoothedEdge;
  bool have_global = false;

  while (next_line()) {
    std::istringstream ls(line);
    std::vector<std::string> f;
    for (std::string w; ls >> w;) f.push_back(w);
    auto bad = [&]() {
      return Error(ErrorCode::Parse, "model line " + std::to_string(lineno) + ": '" + line + "'");
    };
    if (f[0] == "global" && f.size() == 2 &&
        (kind == ModelKind::Baseline1 || kind == ModelKind::Baseline2)) {
      b1.c = b2.fallback_c = parse_double(f[1], lineno);
      have_global = true;
    } else if (f[0] == "path" && f.size() == 3 && kind == ModelKind::Baseline2) {
      b2.c_by_path[f[1]] = parse_double(f[2], lineno);
    } else if (f[0] == "seg" && f.size() == 4 &&
               (kind == ModelKind::Edge || kind == ModelKind::SmoothedEdge)) {
      edge.c_by_segment[SegmentKey{NodeId(f[1]), NodeId(f[2])}] = parse_double(f[3], lineno);
    } else {
      throw bad();
    }
  }
  switch (kind) {
    case ModelKind::Baseline1:
      if (!have_global) throw Error(ErrorCode::Parse, "baseline1 model lacks a global line");
      return b1;
    case ModelKind::Baseline2:
      if (!have_global) throw Error(ErrorCode::Parse, "baseline2 model lacks a global line");
      return b2;
    default:
      return edge;
  }
}

}  // namespace flowanom
