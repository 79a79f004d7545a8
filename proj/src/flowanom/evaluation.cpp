#include "flowanom/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "flowanom/error.hpp"

namespace flowanom {

double sse(const Model& model, std::span<const Observation> obs) {
  double total = 0.0;
  for (const auto& o : obs) {
    const double r = expected_time(model, o.path, o.record.distance_m) - o.record.observed_s();
    total += r * r;
  }
  return total;
}

double rmse(const Model& model, std::span<const Observation> obs) {
  if (obs.empty()) throw Error(ErrorCode::EmptyInput, "rmse of an empty record set");
  return std::sqrt(sse(model, obs) / static_cast<double>(obs.size()));
}

std::size_t FoldSplit::fold_size(int fold) const {
  return static_cast<std::size_t>(std::count(fold_of.begin(), fold_of.end(), fold));
}

FoldSplit make_folds(std::size_t n, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "cross validation needs K >= 2");
  if (n < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::TooFewRecords, std::to_string(n) + " records cannot fill " +
                                              std::to_string(k) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  FoldSplit split;
  split.k = k;
  split.seed = seed;
  split.fold_of.assign(n, 0);
  for (std::size_t p = 0; p < n; ++p) split.fold_of[order[p]] = static_cast<int>(p % k);
  return split;
}

namespace {

double mean_of(const std::vector<CrossValRow>& rows, ModelKind kind, double CrossValRow::*field) {
  double total = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.kind != kind) continue;
    total += r.*field;
    ++n;
  }
  return n ? total / static_cast<double>(n) : std::nan("");
}

}  // namespace

double CrossValResult::mean_test_rmse(ModelKind kind) const {
  return mean_of(rows, kind, &CrossValRow::test_rmse);
}

double CrossValResult::mean_train_rmse(ModelKind kind) const {
  return mean_of(rows, kind, &CrossValRow::train_rmse);
}

CrossValResult kfold(const NetworkGraph& g, std::span<const Observation> obs, int k,
                     std::span<const ModelKind> kinds, const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  CrossValResult result;
  result.split = make_folds(obs.size(), k, seed);

  for (int fold = 0; fold < k; ++fold) {
    std::vector<Observation> train, test;
    for (std::size_t i = 0; i < obs.size(); ++i)
      (result.split.fold_of[i] == fold ? test : train).push_back(obs[i]);

    std::set<SegmentKey> seen;
    for (const auto& o : train)
      for (const auto& s : o.path.segments) seen.insert(s.key());
    std::vector<Observation> scored_test;
    std::size_t excluded = 0;
    for (auto& o : test) {
      const bool covered = std::all_of(o.path.segments.begin(), o.path.segments.end(),
                                       [&](const Segment& s) { return seen.count(s.key()) > 0; });
      if (covered) {
        scored_test.push_back(std::move(o));
      } else {
        ++excluded;
      }
    }

    for (ModelKind kind : kinds) {
      const Model model = fit_model(kind, g, train, cfg);
      CrossValRow row;
      row.fold = fold;
      row.kind = kind;
      row.train_rmse = rmse(model, train);
      row.test_rmse = scored_test.empty() ? std::nan("") : rmse(model, scored_test);
      row.n_test = scored_test.size();
      row.excluded = excluded;
      result.rows.push_back(row);
    }
  }
  return result;
}

}  // namespace flowanom
