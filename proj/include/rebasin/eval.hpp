// Copyright 2026 The Rebasin Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef REBASIN_EVAL_HPP_
#define REBASIN_EVAL_HPP_

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "rebasin/dataset.hpp"
#include "rebasin/model.hpp"
#include "rebasin/train.hpp"

namespace rebasin {

inline constexpr std::size_t kDefaultInterpolationPoints = 25;

// num_points evenly spaced values from 0 to 1 inclusive; num_points >= 2.
std::vector<double> lambda_grid(std::size_t num_points);

struct InterpolationPoint {
  double lambda = 0.0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
};

struct InterpolationCurve {
  std::vector<InterpolationPoint> points;

  std::vector<double> lambdas() const;
  std::vector<double> losses(Split split) const;
};

// Loss and accuracy of (1 - lambda) a + lambda b on both splits at every
// grid point.
InterpolationCurve interpolation_curve(
    const ModelWeights& a, const ModelWeights& b, const Dataset& train,
    const Dataset& test,
    std::size_t num_points = kDefaultInterpolationPoints);

struct BarrierReport {
  double barrier = 0.0;    // max(0, unclamped)
  double unclamped = 0.0;  // max_k v_k - (v_0 + v_last) / 2
  double argmax_lambda = 0.0;
  double start = 0.0;  // value at lambda = 0
  double end = 0.0;    // value at lambda = 1
};

// Barrier of an arbitrary sampled curve; the first maximum wins ties.
BarrierReport barrier_from_values(std::span<const double> lambdas,
                                  std::span<const double> values);
BarrierReport loss_barrier(const InterpolationCurve& curve, Split split);

struct WidthSweepRow {
  std::size_t width = 0;
  std::size_t pair = 0;
  double naive_barrier = 0.0;    // test split
  double matched_barrier = 0.0;  // test split, after weight matching
  double naive_train_barrier = 0.0;
  double matched_train_barrier = 0.0;
};

struct SweepOptions {
  std::size_t num_pairs = 1;
  std::size_t num_points = kDefaultInterpolationPoints;
  std::uint64_t match_seed = 0;
  // Rows from the front of the training set used for the train-split curves;
  // 0 means all rows. Training always uses the full set.
  std::size_t train_eval_rows = 0;
};

// For every width, trains `num_pairs` pairs of models with all hidden
// layers set to that width and seeds derive_seed(base.seed, 2p) and
// derive_seed(base.seed, 2p + 1), then measures barriers before and after
// weight matching. Rows are ordered by width, then pair.
std::vector<WidthSweepRow> width_sweep(std::span<const std::size_t> widths,
                                       const TrainConfig& base,
                                       const Dataset& train,
                                       const Dataset& test,
                                       const SweepOptions& options = {});

struct OnsetRow {
  std::size_t epoch = 0;
  double matched_barrier = 0.0;  // test split
  double naive_barrier = 0.0;    // test split
  double matched_train_barrier = 0.0;
};

// Checkpoint k of each list is the model after k epochs (k = 0 is the
// initialization).
std::vector<OnsetRow> onset_sweep(std::span<const ModelWeights> checkpoints_a,
                                  std::span<const ModelWeights> checkpoints_b,
                                  const Dataset& train, const Dataset& test,
                                  const SweepOptions& options = {});

struct CalibrationBin {
  double lower = 0.0;
  double upper = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;  // 0 for empty bins
  double accuracy = 0.0;         // 0 for empty bins
};

struct CalibrationReport {
  std::vector<CalibrationBin> bins;
  double ece = 0.0;
  std::size_t num_rows = 0;
};

// Bins the max-softmax confidence into equal-width bins over [0, 1]; a
// confidence of exactly 1 falls into the last bin.
CalibrationReport calibration(const ModelWeights& model, const Dataset& data,
                              std::size_t num_bins = 10);

// Spearman rank correlation with average ranks for ties. Returns 0 when
// either input is constant.
double spearman_correlation(std::span<const double> x,
                            std::span<const double> y);

// Header: lambda,train_loss,test_loss,train_acc,test_acc
std::string curve_to_csv(const InterpolationCurve& curve);
nlohmann::ordered_json curve_to_json(const InterpolationCurve& curve);
nlohmann::ordered_json barrier_to_json(const BarrierReport& report);
nlohmann::ordered_json calibration_to_json(const CalibrationReport& report);
nlohmann::ordered_json width_sweep_to_json(std::span<const WidthSweepRow> rows);
nlohmann::ordered_json onset_to_json(std::span<const OnsetRow> rows);

// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

}  // namespace rebasin

#endif  // REBASIN_EVAL_HPP_
