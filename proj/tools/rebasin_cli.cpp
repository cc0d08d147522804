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

// rebasin: train MLPs, align them by permuting hidden units, interpolate,
// merge, and reproduce the desk-scale experiments.
//
// JSON results go to stdout, progress and diagnostics to stderr.

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "rebasin/counterexample.hpp"
#include "rebasin/dataset.hpp"
#include "rebasin/errors.hpp"
#include "rebasin/eval.hpp"
#include "rebasin/matching.hpp"
#include "rebasin/model.hpp"
#include "rebasin/random.hpp"
#include "rebasin/train.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace rebasin;

void log(const std::string& msg) { std::cerr << "[rebasin] " << msg << '\n'; }

struct DataFlags {
  std::string mnist_dir;
  std::string synthetic;  // quadrant | blobs
  std::size_t subset = 0;
  std::size_t test_subset = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--mnist", mnist_dir,
                    "MNIST IDX directory (default: $REBASIN_DATA_DIR)");
    cmd->add_option("--synthetic", synthetic, "Synthetic data instead of MNIST")
        ->check(CLI::IsMember({"quadrant", "blobs"}));
    cmd->add_option("--subset", subset, "Use the first N training rows");
    cmd->add_option("--test-subset", test_subset, "Use the first N test rows");
  }
};

struct Splits {
  Dataset train;
  Dataset test;
};

constexpr std::size_t kSyntheticTrainRows = 10000;
constexpr std::size_t kSyntheticTestRows = 2000;
constexpr int kBlobClasses = 4;
constexpr std::size_t kBlobDim = 16;
constexpr double kBlobSeparation = 4.0;

Splits load_data(const DataFlags& flags, std::uint64_t seed) {
  Splits s;
  if (!flags.synthetic.empty()) {
    const std::size_t n_train = flags.subset ? flags.subset : kSyntheticTrainRows;
    const std::size_t n_test =
        flags.test_subset ? flags.test_subset : kSyntheticTestRows;
    const auto train_seed = derive_seed(seed, 100);
    const auto test_seed = derive_seed(seed, 101);
    if (flags.synthetic == "quadrant") {
      s.train = gen_quadrant_dataset(n_train, train_seed, Split::kTrain);
      s.test = gen_quadrant_dataset(n_test, test_seed, Split::kTest);
    } else {
      // One draw so that both splits share the class centers.
      const Dataset all =
          gen_blobs_dataset(n_train + n_test, kBlobClasses, kBlobDim,
                            kBlobSeparation, train_seed, Split::kTrain);
      s.train = slice(all, 0, n_train);
      s.test = slice(all, n_train, n_train + n_test);
      s.test.split = Split::kTest;
    }
    return s;
  }
  std::filesystem::path dir = flags.mnist_dir;
  if (dir.empty()) dir = default_data_dir();
  if (dir.empty()) {
    throw InvalidInput("no dataset: pass --mnist DIR, set REBASIN_DATA_DIR, "
                       "or use --synthetic");
  }
  s.train = load_mnist(dir, Split::kTrain);
  s.test = load_mnist(dir, Split::kTest);
  if (flags.subset) s.train = head(s.train, flags.subset);
  if (flags.test_subset) s.test = head(s.test, flags.test_subset);
  return s;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidInput("failed writing " + path.string());
}

json metrics_json(const ModelWeights& model, const Splits& data) {
  const LossAccuracy tr = loss_and_accuracy(model, data.train);
  const LossAccuracy te = loss_and_accuracy(model, data.test);
  return {{"train_loss", tr.loss},
          {"train_acc", tr.accuracy},
          {"test_loss", te.loss},
          {"test_acc", te.accuracy}};
}

void emit(const json& j) { std::cout << j.dump(2) << '\n'; }

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  DataFlags data;
};

int cmd_train(const TrainArgs& args) {
  TrainConfig config = args.config_path.empty()
                           ? TrainConfig::desk()
                           : TrainConfig::load(args.config_path);
  if (args.seed) config.seed = *args.seed;
  if (args.epochs) config.epochs = *args.epochs;
  config.validate();
  const Splits data = load_data(args.data, config.seed);
  log("training on " + std::to_string(data.train.size()) + " rows");
  TrainHooks hooks;
  hooks.on_epoch = [](std::size_t epoch, const ModelWeights&) {
    if (epoch > 0) log("epoch " + std::to_string(epoch) + " done");
  };
  const ModelWeights model = train_mlp(config, data.train, hooks);
  save_checkpoint(model, args.out);
  json out = metrics_json(model, data);
  out["checkpoint"] = args.out;
  out["seed"] = config.seed;
  emit(out);
  return 0;
}

// ---------------------------------------------------------------- align

struct AlignArgs {
  std::string model_a;
  std::string model_b;
  std::string method = "weight";
  std::string out_perm;
  std::string out_model;
  std::uint64_t seed = 0;
  bool no_bias = false;
  std::size_t ste_steps = SteConfig{}.steps;
  double ste_lr = SteConfig{}.learning_rate;
  std::size_t ste_batch = SteConfig{}.batch_size;
  std::size_t activation_rows = kDefaultActivationRows;
  DataFlags data;
};

int cmd_align(const AlignArgs& args) {
  const ModelWeights a = load_checkpoint(args.model_a);
  const ModelWeights b = load_checkpoint(args.model_b);
  check_same_shape(a, b, "align");

  json out;
  out["method"] = args.method;
  PermutationSet perms;
  if (args.method == "weight") {
    WeightMatchingOptions options;
    options.seed = args.seed;
    options.include_bias = !args.no_bias;
    const auto result = weight_matching(a, b, options);
    perms = result.perms;
    out["passes"] = result.passes;
    out["converged"] = result.converged;
  } else if (args.method == "greedy") {
    perms = greedy_unidirectional_matching(a, b, !args.no_bias);
  } else {
    const Splits data = load_data(args.data, args.seed);
    if (args.method == "ste") {
      SteConfig config;
      config.seed = args.seed;
      config.steps = args.ste_steps;
      config.learning_rate = args.ste_lr;
      config.batch_size = args.ste_batch;
      const SteResult result = ste_matching(a, b, data.train, config);
      perms = result.perms;
      out["best_step"] = result.best_step;
      out["best_midpoint_loss"] = result.best_loss;
    } else {
      const auto acts_a = record_activations(a, data.train, args.activation_rows);
      const auto acts_b = record_activations(b, data.train, args.activation_rows);
      if (args.method == "activation") {
        perms = activation_matching(acts_a, acts_b);
      } else {
        const auto result = correlation_matching(acts_a, acts_b);
        perms = result.perms;
        for (const auto& z : result.zero_variance) {
          log(std::string("warning: zero-variance unit ") +
              std::to_string(z.unit) + " in layer " + std::to_string(z.layer) +
              " of model " + z.model);
        }
        out["zero_variance_units"] = result.zero_variance.size();
      }
    }
  }

  const auto identity = PermutationSet::identity_for(a);
  out["objective_before"] = soblap_objective(a, b, identity);
  out["objective_after"] = soblap_objective(a, b, perms);
  out["identity"] = perms.is_identity();
  if (!args.out_perm.empty()) {
    save_permutation_set(perms, args.out_perm);
    out["perm"] = args.out_perm;
  }
  if (!args.out_model.empty()) {
    save_checkpoint(apply_permutation(b, perms), args.out_model);
    out["aligned"] = args.out_model;
  }
  emit(out);
  return 0;
}

// ---------------------------------------------------------------- interp

struct InterpArgs {
  std::string model_a;
  std::string model_b;
  std::size_t points = kDefaultInterpolationPoints;
  std::string csv;
  std::string match = "none";
  std::uint64_t seed = 0;
  DataFlags data;
};

int cmd_interp(const InterpArgs& args) {
  const ModelWeights a = load_checkpoint(args.model_a);
  ModelWeights b = load_checkpoint(args.model_b);
  check_same_shape(a, b, "interp");
  if (args.match == "weight") {
    b = apply_permutation(b, weight_matching(a, b, args.seed));
  }
  const Splits data = load_data(args.data, args.seed);
  const auto curve = interpolation_curve(a, b, data.train, data.test, args.points);
  if (!args.csv.empty()) write_text(args.csv, curve_to_csv(curve));
  json out;
  out["points"] = curve.points.size();
  out["match"] = args.match;
  out["train"] = barrier_to_json(loss_barrier(curve, Split::kTrain));
  out["test"] = barrier_to_json(loss_barrier(curve, Split::kTest));
  emit(out);
  return 0;
}

// ---------------------------------------------------------------- merge-many

struct MergeArgs {
  std::vector<std::string> models;
  std::string out;
  std::uint64_t seed = 0;
  DataFlags data;
};

int cmd_merge_many(const MergeArgs& args) {
  std::vector<ModelWeights> models;
  for (const auto& path : args.models) models.push_back(load_checkpoint(path));
  MergeManyOptions options;
  options.seed = args.seed;
  const MergeManyResult result = merge_many(models, options);
  if (!args.out.empty()) save_checkpoint(result.merged, args.out);

  const Splits data = load_data(args.data, args.seed);
  json out;
  out["rounds"] = result.rounds;
  out["converged"] = result.converged;
  auto per_model = json::array();
  for (std::size_t i = 0; i < models.size(); ++i) {
    json m = metrics_json(models[i], data);
    m["path"] = args.models[i];
    m["ece"] = calibration(models[i], data.test).ece;
    per_model.push_back(m);
  }
  out["models"] = per_model;
  double naive_sum = 0.0;
  std::size_t naive_count = 0;
  for (std::size_t i = 0; i < models.size(); ++i) {
    for (std::size_t j = i + 1; j < models.size(); ++j) {
      naive_sum += loss_and_accuracy(interpolate(models[i], models[j], 0.5),
                                     data.test)
                       .loss;
      ++naive_count;
    }
  }
  out["naive_midpoint_test_loss_mean"] = naive_sum / static_cast<double>(naive_count);
  json merged = metrics_json(result.merged, data);
  merged["ece"] = calibration(result.merged, data.test).ece;
  if (!args.out.empty()) merged["path"] = args.out;
  out["merged"] = merged;
  emit(out);
  return 0;
}

// ---------------------------------------------------------------- counterexample

struct CounterexampleArgs {
  std::string csv;
  std::size_t samples = 100000;
  std::size_t points = kDefaultInterpolationPoints;
  std::uint64_t seed = 0;
};

int cmd_counterexample(const CounterexampleArgs& args) {
  const CounterexamplePair pair = build_counterexample();
  const Dataset data = gen_quadrant_dataset(args.samples, args.seed, Split::kTest);
  const NoLmcReport report = verify_no_lmc(pair, data, args.points);
  if (!args.csv.empty()) write_text(args.csv, counterexample_csv(report));

  const bool pass = report.endpoints_perfect && report.all_interior_barriers;
  json out;
  out["verdict"] = pass ? "PASS" : "FAIL";
  out["samples"] = args.samples;
  out["error_a"] = report.error_a;
  out["error_b"] = report.error_b;
  auto perms = json::array();
  for (const auto& c : report.curves) {
    perms.push_back({{"perm_id", c.perm_id},
                     {"max_interior_error", c.max_interior_error},
                     {"argmax_lambda", c.argmax_lambda},
                     {"barrier", c.barrier}});
  }
  out["permutations"] = perms;
  emit(out);
  std::cerr << (pass ? "PASS" : "FAIL")
            << ": endpoint errors " << report.error_a << ", " << report.error_b
            << "; smallest barrier over 4 permutations " << report.min_barrier
            << '\n';
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------- permute

struct PermuteArgs {
  std::string model;
  std::string out;
  std::string out_perm;
  std::uint64_t seed = 0;
};

int cmd_permute(const PermuteArgs& args) {
  const ModelWeights model = load_checkpoint(args.model);
  Rng rng(args.seed);
  const auto widths = model.hidden_widths();
  const PermutationSet perms = random_permutation_set(widths, rng);
  save_checkpoint(apply_permutation(model, perms), args.out);
  if (!args.out_perm.empty()) save_permutation_set(perms, args.out_perm);
  emit({{"checkpoint", args.out}, {"perm", args.out_perm}});
  return 0;
}

// ---------------------------------------------------------------- sweeps

struct WidthSweepArgs {
  std::vector<std::size_t> widths = {64, 128, 256, 512};
  std::size_t pairs = 3;
  std::size_t points = kDefaultInterpolationPoints;
  std::optional<std::size_t> epochs;
  std::uint64_t seed = 0;
  DataFlags data;
};

int cmd_width_sweep(const WidthSweepArgs& args) {
  TrainConfig base = TrainConfig::desk();
  base.seed = args.seed;
  if (args.epochs) base.epochs = *args.epochs;
  const Splits data = load_data(args.data, args.seed);
  SweepOptions options;
  options.num_pairs = args.pairs;
  options.num_points = args.points;
  options.match_seed = args.seed;
  const auto rows = width_sweep(args.widths, base, data.train, data.test, options);
  std::vector<double> w;
  std::vector<double> barrier;
  for (const auto& r : rows) {
    w.push_back(static_cast<double>(r.width));
    barrier.push_back(r.matched_barrier);
  }
  json out;
  out["rows"] = width_sweep_to_json(rows);
  if (rows.size() >= 2) out["spearman_width_vs_matched"] = spearman_correlation(w, barrier);
  emit(out);
  return 0;
}

struct OnsetArgs {
  std::optional<std::size_t> epochs;
  std::size_t points = kDefaultInterpolationPoints;
  std::uint64_t seed = 0;
  DataFlags data;
};

int cmd_onset(const OnsetArgs& args) {
  TrainConfig config = TrainConfig::desk();
  if (args.epochs) config.epochs = *args.epochs;
  const Splits data = load_data(args.data, args.seed);
  std::vector<ModelWeights> ckpt_a;
  std::vector<ModelWeights> ckpt_b;
  for (auto* list : {&ckpt_a, &ckpt_b}) {
    config.seed = derive_seed(args.seed, list == &ckpt_a ? 0 : 1);
    TrainHooks hooks;
    hooks.on_epoch = [list](std::size_t, const ModelWeights& m) {
      list->push_back(m);
    };
    train_mlp(config, data.train, hooks);
  }
  SweepOptions options;
  options.num_points = args.points;
  options.match_seed = args.seed;
  const auto rows = onset_sweep(ckpt_a, ckpt_b, data.train, data.test, options);
  emit({{"rows", onset_to_json(rows)}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Permutation alignment, interpolation and merging of MLPs"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train an MLP and write a checkpoint");
  c_train->add_option("--config", train.config_path, "key=value config file")
      ->check(CLI::ExistingFile);
  c_train->add_option("--out", train.out, "Output checkpoint")->required();
  c_train->add_option("--seed", train.seed, "Overrides the config seed");
  c_train->add_option("--epochs", train.epochs, "Overrides the config epochs");
  train.data.add(c_train);

  AlignArgs align;
  auto* c_align = app.add_subcommand("align", "Permute model B to match model A");
  c_align->add_option("model_a", align.model_a)->required()->check(CLI::ExistingFile);
  c_align->add_option("model_b", align.model_b)->required()->check(CLI::ExistingFile);
  c_align->add_option("--method", align.method)
      ->check(CLI::IsMember({"weight", "activation", "ste", "greedy", "correlation"}));
  c_align->add_option("--out-perm", align.out_perm, "Permutation text file");
  c_align->add_option("--out-model", align.out_model, "Aligned checkpoint of B");
  c_align->add_option("--seed", align.seed);
  c_align->add_flag("--no-bias", align.no_bias, "Leave biases out of the profit");
  c_align->add_option("--ste-steps", align.ste_steps);
  c_align->add_option("--ste-lr", align.ste_lr);
  c_align->add_option("--ste-batch", align.ste_batch);
  c_align->add_option("--activation-rows", align.activation_rows);
  align.data.add(c_align);

  InterpArgs interp;
  auto* c_interp = app.add_subcommand("interp", "Interpolation curve and barriers");
  c_interp->add_option("model_a", interp.model_a)->required()->check(CLI::ExistingFile);
  c_interp->add_option("model_b", interp.model_b)->required()->check(CLI::ExistingFile);
  c_interp->add_option("--points", interp.points)->check(CLI::Range(2, 100000));
  c_interp->add_option("--csv", interp.csv, "Curve CSV output");
  c_interp->add_option("--match", interp.match, "Align B first")
      ->check(CLI::IsMember({"none", "weight"}));
  c_interp->add_option("--seed", interp.seed);
  interp.data.add(c_interp);

  MergeArgs merge;
  auto* c_merge = app.add_subcommand("merge-many", "Align N models jointly and average");
  c_merge->add_option("models", merge.models)->required()->expected(2, -1)
      ->check(CLI::ExistingFile);
  c_merge->add_option("--out", merge.out, "Merged checkpoint");
  c_merge->add_option("--seed", merge.seed);
  merge.data.add(c_merge);

  CounterexampleArgs counter;
  auto* c_counter = app.add_subcommand(
      "counterexample", "Check that no permutation connects the quadrant pair");
  c_counter->add_option("--csv", counter.csv, "perm_id,lambda,error output");
  c_counter->add_option("--samples", counter.samples)->check(CLI::PositiveNumber);
  c_counter->add_option("--points", counter.points)->check(CLI::Range(3, 100000));
  c_counter->add_option("--seed", counter.seed);

  PermuteArgs permute;
  auto* c_permute = app.add_subcommand(
      "permute", "Write a randomly permuted, functionally equal copy");
  c_permute->add_option("model", permute.model)->required()->check(CLI::ExistingFile);
  c_permute->add_option("--out", permute.out)->required();
  c_permute->add_option("--out-perm", permute.out_perm);
  c_permute->add_option("--seed", permute.seed);

  WidthSweepArgs sweep;
  auto* c_sweep = app.add_subcommand("width-sweep", "Barriers versus hidden width");
  c_sweep->add_option("--widths", sweep.widths)->delimiter(',');
  c_sweep->add_option("--pairs", sweep.pairs)->check(CLI::PositiveNumber);
  c_sweep->add_option("--points", sweep.points)->check(CLI::Range(2, 100000));
  c_sweep->add_option("--epochs", sweep.epochs);
  c_sweep->add_option("--seed", sweep.seed);
  sweep.data.add(c_sweep);

  OnsetArgs onset;
  auto* c_onset = app.add_subcommand("onset", "Matched barrier after every epoch");
  c_onset->add_option("--epochs", onset.epochs);
  c_onset->add_option("--points", onset.points)->check(CLI::Range(2, 100000));
  c_onset->add_option("--seed", onset.seed);
  onset.data.add(c_onset);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_train) return cmd_train(train);
    if (*c_align) return cmd_align(align);
    if (*c_interp) return cmd_interp(interp);
    if (*c_merge) return cmd_merge_many(merge);
    if (*c_counter) return cmd_counterexample(counter);
    if (*c_permute) return cmd_permute(permute);
    if (*c_sweep) return cmd_width_sweep(sweep);
    if (*c_onset) return cmd_onset(onset);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
