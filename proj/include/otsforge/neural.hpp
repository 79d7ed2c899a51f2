#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "otsforge/network.hpp"

namespace otsforge {

// Fully connected net: ELU on every hidden layer, sigmoid(eta * (W h + b))
// on the output. weights[k] is dims[k+1] x dims[k].
struct MlpParams {
  std::vector<int> layer_dims;
  std::vector<Mat> weights;
  std::vector<Vec> biases;
  double eta = 3.0;
  // Inputs are standardized as (demand - input_mean) / input_std.
  Vec input_mean;
  Vec input_std;

  int n_layers() const { return static_cast<int>(weights.size()); }
  int n_inputs() const { return layer_dims.front(); }
  int n_outputs() const { return layer_dims.back(); }
  std::size_t n_params() const;

  // Weights (row-major) then bias, layer by layer.
  Vec flat() const;
  void set_flat(const Vec& v);
  std::uint64_t fingerprint() const;
};

struct MlpGrads {
  std::vector<Mat> weights;
  std::vector<Vec> biases;

  static MlpGrads zeros_like(const MlpParams& p);
  MlpGrads& operator+=(const MlpGrads& o);
  MlpGrads& operator*=(double s);
  Vec flat() const;
};

// Everything backprop needs from the forward pass.
struct MlpCache {
  std::uint64_t params_fingerprint = 0;
  std::vector<Vec> inputs;       // input to layer k (standardized demand for k = 0)
  std::vector<Vec> preactivations;
  Vec output;
};

// Last-layer initialization W = 0, b = 9/eta, so every output is sigmoid(9).
inline constexpr double kHeadLogit = 9.0;

MlpParams init_params(std::uint64_t seed, const std::vector<int>& dims, double eta, bool custom_head);

Vec mlp_forward(const MlpParams& params, const Vec& demand, MlpCache* cache = nullptr);

MlpGrads backprop(const MlpParams& params, const MlpCache& cache, const Vec& dloss_dzhat);

double elu(double x);
double elu_grad(double x);
double sigmoid(double x);

struct AdamWState {
  Vec m;
  Vec v;
  long step = 0;
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;

  static AdamWState for_params(const MlpParams& p, double lr, double weight_decay);
};

// Decoupled decay, then the bias-corrected Adam step.
void adamw_step(MlpParams& params, const MlpGrads& grads, AdamWState& state);

// Mean/std per input over the rows; zero std is replaced by 1.
void fit_standardizer(MlpParams& params, const std::vector<Vec>& samples);

struct Checkpoint {
  MlpParams params;
  std::uint64_t seed = 0;
  nlohmann::json metadata = nlohmann::json::object();
};

nlohmann::json checkpoint_to_json(const Checkpoint& ck);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
void save_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace otsforge
