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

#include "rebasin/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rebasin/errors.hpp"
#include "rebasin/matching.hpp"
#include "rebasin/random.hpp"

namespace rebasin {

std::vector<double> lambda_grid(std::size_t num_points) {
  if (num_points < 2) {
    throw InvalidInput("lambda grid needs at least 2 points");
  }
  std::vector<double> grid(num_points);
  const auto last = static_cast<double>(num_points - 1);
  for (std::size_t i = 0; i < num_points; ++i) {
    grid[i] = static_cast<double>(i) / last;
  }
  return grid;
}

std::vector<double> InterpolationCurve::lambdas() const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(p.lambda);
  return out;
}

std::vector<double> InterpolationCurve::losses(Split split) const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    out.push_back(split == Split::kTrain ? p.train_loss : p.test_loss);
  }
  return out;
}

InterpolationCurve interpolation_curve(const ModelWeights& a,
                                       const ModelWeights& b,
                                       const Dataset& train,
                                       const Dataset& test,
                                       std::size_t num_points) {
  check_same_shape(a, b, "interpolation_curve");
  InterpolationCurve curve;
  for (const double lambda : lambda_grid(num_points)) {
    const ModelWeights mid = interpolate(a, b, lambda);
    const LossAccuracy tr = loss_and_accuracy(mid, train);
    const LossAccuracy te = loss_and_accuracy(mid, test);
    curve.points.push_back(
        {lambda, tr.loss, te.loss, tr.accuracy, te.accuracy});
  }
  return curve;
}

BarrierReport barrier_from_values(std::span<const double> lambdas,
                                  std::span<const double> values) {
  if (values.empty() || values.size() != lambdas.size()) {
    throw InvalidInput("barrier: need matching, nonempty lambda/value lists");
  }
  BarrierReport report;
  report.start = values.front();
  report.end = values.back();
  const double base = 0.5 * (report.start + report.end);
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  report.unclamped = values[best] - base;
  report.barrier = std::max(0.0, report.unclamped);
  report.argmax_lambda = lambdas[best];
  return report;
}

BarrierReport loss_barrier(const InterpolationCurve& curve, Split split) {
  const auto lambdas = curve.lambdas();
  const auto losses = curve.losses(split);
  return barrier_from_values(lambdas, losses);
}

namespace {

Dataset eval_rows(const Dataset& train, const SweepOptions& options) {
  if (options.train_eval_rows == 0) return train;
  return head(train, std::min(options.train_eval_rows, train.size()));
}

}  // namespace

std::vector<WidthSweepRow> width_sweep(std::span<const std::size_t> widths,
                                       const TrainConfig& base,
                                       const Dataset& train,
                                       const Dataset& test,
                                       const SweepOptions& options) {
  if (widths.empty()) throw InvalidInput("width_sweep: no widths");
  if (options.num_pairs == 0) throw InvalidInput("width_sweep: no pairs");
  const std::size_t depth = base.widths.empty() ? 1 : base.widths.size();
  const Dataset train_eval = eval_rows(train, options);
  std::vector<WidthSweepRow> rows;
  for (const std::size_t width : widths) {
    for (std::size_t pair = 0; pair < options.num_pairs; ++pair) {
      TrainConfig config = base;
      config.widths.assign(depth, width);
      config.seed = derive_seed(base.seed, 2 * pair);
      const ModelWeights a = train_mlp(config, train);
      config.seed = derive_seed(base.seed, 2 * pair + 1);
      const ModelWeights b = train_mlp(config, train);

      const auto perms = weight_matching(a, b, options.match_seed);
      const auto naive =
          interpolation_curve(a, b, train_eval, test, options.num_points);
      const auto matched = interpolation_curve(a, apply_permutation(b, perms),
                                               train_eval, test, options.num_points);
      rows.push_back({width, pair, loss_barrier(naive, Split::kTest).barrier,
                      loss_barrier(matched, Split::kTest).barrier,
                      loss_barrier(naive, Split::kTrain).barrier,
                      loss_barrier(matched, Split::kTrain).barrier});
    }
  }
  return rows;
}

std::vector<OnsetRow> onset_sweep(std::span<const ModelWeights> checkpoints_a,
                                  std::span<const ModelWeights> checkpoints_b,
                                  const Dataset& train, const Dataset& test,
                                  const SweepOptions& options) {
  if (checkpoints_a.size() != checkpoints_b.size()) {
    throw InvalidInput("onset_sweep: checkpoint lists differ in length (" +
                       std::to_string(checkpoints_a.size()) + " vs " +
                       std::to_string(checkpoints_b.size()) + ")");
  }
  const Dataset train_eval = eval_rows(train, options);
  std::vector<OnsetRow> rows;
  for (std::size_t e = 0; e < checkpoints_a.size(); ++e) {
    const auto& a = checkpoints_a[e];
    const auto& b = checkpoints_b[e];
    const auto perms = weight_matching(a, b, options.match_seed);
    const auto naive =
        interpolation_curve(a, b, train_eval, test, options.num_points);
    const auto matched = interpolation_curve(a, apply_permutation(b, perms),
                                             train_eval, test, options.num_points);
    rows.push_back({e, loss_barrier(matched, Split::kTest).barrier,
                    loss_barrier(naive, Split::kTest).barrier,
                    loss_barrier(matched, Split::kTrain).barrier});
  }
  return rows;
}

CalibrationReport calibration(const ModelWeights& model, const Dataset& data,
                              std::size_t num_bins) {
  if (data.size() == 0) throw InvalidInput("calibration: empty dataset");
  if (num_bins == 0) throw InvalidInput("calibration: need at least one bin");

  CalibrationReport report;
  report.num_rows = data.size();
  report.bins.resize(num_bins);
  std::vector<double> conf_sum(num_bins, 0.0);
  std::vector<std::size_t> correct(num_bins, 0);

  const Matrix<float> logits = forward_batch(model, data.features);
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto row = logits.row(r);
    std::size_t pred = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[pred]) pred = k;
    }
    const double top = row[pred];
    double denom = 0.0;
    for (const float v : row) denom += std::exp(static_cast<double>(v) - top);
    const double conf = 1.0 / denom;
    auto bin = static_cast<std::size_t>(conf * static_cast<double>(num_bins));
    bin = std::min(bin, num_bins - 1);
    ++report.bins[bin].count;
    conf_sum[bin] += conf;
    if (static_cast<int>(pred) == data.labels[r]) ++correct[bin];
  }

  const auto n = static_cast<double>(data.size());
  for (std::size_t b = 0; b < num_bins; ++b) {
    auto& bin = report.bins[b];
    bin.lower = static_cast<double>(b) / static_cast<double>(num_bins);
    bin.upper = static_cast<double>(b + 1) / static_cast<double>(num_bins);
    if (bin.count == 0) continue;
    const auto count = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / count;
    bin.accuracy = static_cast<double>(correct[b]) / count;
    report.ece += count / n * std::abs(bin.accuracy - bin.mean_confidence);
  }
  return report;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&v](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < idx.size()) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_correlation(std::span<const double> x,
                            std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw InvalidInput("spearman_correlation: need two equal-length lists");
  }
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

std::string format_number(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string curve_to_csv(const InterpolationCurve& curve) {
  std::ostringstream out;
  out << "lambda,train_loss,test_loss,train_acc,test_acc\n";
  for (const auto& p : curve.points) {
    out << format_number(p.lambda) << ',' << format_number(p.train_loss) << ','
        << format_number(p.test_loss) << ',' << format_number(p.train_acc)
        << ',' << format_number(p.test_acc) << '\n';
  }
  return out.str();
}

nlohmann::ordered_json curve_to_json(const InterpolationCurve& curve) {
  auto records = nlohmann::ordered_json::array();
  for (const auto& p : curve.points) {
    records.push_back({{"lambda", p.lambda},
                       {"train_loss", p.train_loss},
                       {"test_loss", p.test_loss},
                       {"train_acc", p.train_acc},
                       {"test_acc", p.test_acc}});
  }
  return records;
}

nlohmann::ordered_json barrier_to_json(const BarrierReport& report) {
  return {{"barrier", report.barrier},
          {"unclamped", report.unclamped},
          {"argmax_lambda", report.argmax_lambda},
          {"start", report.start},
          {"end", report.end}};
}

nlohmann::ordered_json calibration_to_json(const CalibrationReport& report) {
  auto bins = nlohmann::ordered_json::array();
  for (const auto& b : report.bins) {
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"count", b.count},
                    {"mean_confidence", b.mean_confidence},
                    {"accuracy", b.accuracy}});
  }
  return {{"ece", report.ece}, {"num_rows", report.num_rows}, {"bins", bins}};
}

nlohmann::ordered_json width_sweep_to_json(std::span<const WidthSweepRow> rows) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    out.push_back({{"width", r.width},
                   {"pair", r.pair},
                   {"naive_barrier", r.naive_barrier},
                   {"matched_barrier", r.matched_barrier},
                   {"naive_train_barrier", r.naive_train_barrier},
                   {"matched_train_barrier", r.matched_train_barrier}});
  }
  return out;
}

nlohmann::ordered_json onset_to_json(std::span<const OnsetRow> rows) {
  auto out = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    out.push_back({{"epoch", r.epoch},
                   {"matched_barrier", r.matched_barrier},
                   {"naive_barrier", r.naive_barrier},
                   {"matched_train_barrier", r.matched_train_barrier}});
  }
  return out;
}

}  // namespace rebasin
