#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "flowanom/models.hpp"

namespace flowanom {

// Sum over records of (expected - observed)^2.
double sse(const Model& model, std::span<const Observation> obs);
double rmse(const Model& model, std::span<const Observation> obs);

struct FoldSplit {
  int k = 0;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;  // parallel to the input records

  std::size_t fold_size(int fold) const;
};

// Seeded uniform shuffle, then round robin, so fold sizes differ by at most one.
FoldSplit make_folds(std::size_t n, int k, std::uint64_t seed);

struct CrossValRow {
  int fold = 0;
  ModelKind kind = ModelKind::Baseline1;
  double train_rmse = 0.0;
  double test_rmse = 0.0;
  std::size_t n_test = 0;
  // test records whose path uses a segment no training record traversed
  std::size_t excluded = 0;
};

struct CrossValResult {
  FoldSplit split;
  std::vector<CrossValRow> rows;

  double mean_test_rmse(ModelKind kind) const;
  double mean_train_rmse(ModelKind kind) const;
};

CrossValResult kfold(const NetworkGraph& g, std::span<const Observation> obs, int k,
                     std::span<const ModelKind> kinds, const TrainConfig& cfg, std::uint64_t seed);

}  // namespace flowanom
