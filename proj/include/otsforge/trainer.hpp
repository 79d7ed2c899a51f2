#pragma once

#include <optional>
#include <vector>

#include "otsforge/diff_opf.hpp"
#include "otsforge/neural.hpp"
#include "otsforge/ots.hpp"
#include "otsforge/scenarios.hpp"

namespace otsforge {

enum class InfeasiblePolicy { Skip };

struct TrainConfig {
  int epochs = 50;
  int batch_size = 25;
  double lr = 5e-5;
  double weight_decay = 1e-2;
  double eta = 3.0;
  std::uint64_t seed = 0;
  InfeasiblePolicy infeasible_policy = InfeasiblePolicy::Skip;
  // eps * |p_g|^2 added to the training-time OPF when every cost is linear.
  double lp_regularizer_eps = 1e-4;
  // Hidden width; 0 picks 64 up to 100 buses and 128 above.
  int hidden = 0;
  bool custom_head = true;
  double threshold = 0.5;
  bool deterministic = true;
  int jobs = 1;
  DispatchOptions dispatch;
};

struct EpochStats {
  double train_loss = 0.0;  // mean relaxed cost over feasible forwards, $/h
  double val_cost = 0.0;    // mean binarized inference cost on the val split, $/h
  int infeasible_forwards = 0;
  int updates = 0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  double initial_val_cost = 0.0;
  int best_epoch = -1;  // -1: the initial parameters were never beaten
  double best_val_cost = 0.0;
};

struct TrainResult {
  MlpParams params;  // best validation cost
  MlpParams initial_params;
  TrainHistory history;
};

std::vector<int> default_layer_dims(const Network& net, int hidden = 0);

TrainResult train(const Network& net, const Dataset& data, const TrainConfig& cfg);

// z_i = 1 iff z_hat_i >= threshold.
SwitchVector binarize(const Vec& z_hat, double threshold = 0.5);

struct InferResult {
  Vec z_hat;
  SwitchVector z;
  DispatchSolution dispatch;
  bool used_fallback = false;
  double seconds = 0.0;  // forward + binarize + OPF (+ fallback when taken)
};

// Binarized topology and its dispatch; falls back to every line closed when
// that topology's OPF is infeasible. Throws FallbackAlsoInfeasible if the
// all-closed OPF is infeasible too.
InferResult infer(const MlpParams& params, const Network& net, const Vec& demand, double threshold = 0.5,
                  const DispatchOptions& opts = {});

struct MethodSummary {
  double mean_objective = 0.0;  // over solved samples, $/h
  double median_ms = 0.0;
  double mean_ms = 0.0;
  int solved = 0;
  int not_solved = 0;
};

struct SampleRecord {
  int index = 0;  // position in the dataset
  double ed = 0.0, opf = 0.0, ots = 0.0, dadnn = 0.0;
  bool ots_solved = false;
  bool ots_proved = false;
  bool fallback = false;
  int lines_open = 0;
  double ed_ms = 0.0, opf_ms = 0.0, ots_ms = 0.0, dadnn_ms = 0.0;
  double feasibility_residual = 0.0;  // independent check of the DA-DNN pair
};

struct EvalOptions {
  // Seconds per sample for exact switching; negative skips it, 0 marks it
  // not solved.
  double ots_budget_s = -1.0;
  double threshold = 0.5;
  int jobs = 1;
  DispatchOptions dispatch;
};

struct EvalReport {
  MethodSummary ed, opf, ots, dadnn;
  bool has_ots = false;
  bool has_dadnn = false;
  int fallback_count = 0;
  std::vector<SampleRecord> records;
};

// params may be null, in which case the DA-DNN column is skipped.
EvalReport evaluate(const MlpParams* params, const Network& net, const Dataset& data, Split split,
                    const EvalOptions& opts = {});

}  // namespace otsforge
