#include "otsforge/neural.hpp"

#include <cmath>
#include <fmt/format.h>
#include <fstream>

#include "hash.hpp"
#include "otsforge/error.hpp"
#include "otsforge/random.hpp"

namespace otsforge {

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::size_t MlpParams::n_params() const {
  std::size_t n = 0;
  for (int k = 0; k < n_layers(); ++k) n += weights[k].size() + biases[k].size();
  return n;
}

Vec MlpParams::flat() const {
  Vec v(static_cast<Eigen::Index>(n_params()));
  Eigen::Index at = 0;
  for (int k = 0; k < n_layers(); ++k) {
    for (Eigen::Index r = 0; r < weights[k].rows(); ++r) {
      v.segment(at, weights[k].cols()) = weights[k].row(r).transpose();
      at += weights[k].cols();
    }
    v.segment(at, biases[k].size()) = biases[k];
    at += biases[k].size();
  }
  return v;
}

void MlpParams::set_flat(const Vec& v) {
  if (static_cast<std::size_t>(v.size()) != n_params()) {
    fail(ErrorCode::DimensionMismatch, fmt::format("{} values for {} parameters", v.size(), n_params()));
  }
  Eigen::Index at = 0;
  for (int k = 0; k < n_layers(); ++k) {
    for (Eigen::Index r = 0; r < weights[k].rows(); ++r) {
      weights[k].row(r) = v.segment(at, weights[k].cols()).transpose();
      at += weights[k].cols();
    }
    biases[k] = v.segment(at, biases[k].size());
    at += biases[k].size();
  }
}

std::uint64_t MlpParams::fingerprint() const {
  detail::Fnv1a f;
  for (int d : layer_dims) f.value(d);
  f.value(eta);
  f.vec(input_mean);
  f.vec(input_std);
  for (int k = 0; k < n_layers(); ++k) {
    f.bytes(weights[k].data(), sizeof(double) * weights[k].size());
    f.vec(biases[k]);
  }
  return f.h;
}

MlpGrads MlpGrads::zeros_like(const MlpParams& p) {
  MlpGrads g;
  for (int k = 0; k < p.n_layers(); ++k) {
    g.weights.push_back(Mat::Zero(p.weights[k].rows(), p.weights[k].cols()));
    g.biases.push_back(Vec::Zero(p.biases[k].size()));
  }
  return g;
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& o) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] += o.weights[k];
    biases[k] += o.biases[k];
  }
  return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] *= s;
    biases[k] *= s;
  }
  return *this;
}

Vec MlpGrads::flat() const {
  MlpParams shape;
  shape.weights = weights;
  shape.biases = biases;
  return shape.flat();
}

MlpParams init_params(std::uint64_t seed, const std::vector<int>& dims, double eta, bool custom_head) {
  if (dims.size() < 2) fail(ErrorCode::InvalidArgument, "an MLP needs at least an input and an output size");
  for (int d : dims) {
    if (d <= 0) fail(ErrorCode::InvalidArgument, fmt::format("layer size {} must be positive", d));
  }
  if (!(eta >= 1.0)) fail(ErrorCode::InvalidArgument, fmt::format("eta = {} must be >= 1", eta));
  MlpParams p;
  p.layer_dims = dims;
  p.eta = eta;
  p.input_mean = Vec::Zero(dims.front());
  p.input_std = Vec::Ones(dims.front());
  Rng rng(seed);
  const int layers = static_cast<int>(dims.size()) - 1;
  for (int k = 0; k < layers; ++k) {
    const int in = dims[k];
    const int out = dims[k + 1];
    Mat w(out, in);
    Vec b(out);
    if (k == layers - 1 && custom_head) {
      w.setZero();
      b.setConstant(kHeadLogit / eta);
    } else {
      const double r = 1.0 / std::sqrt(static_cast<double>(in));
      for (int i = 0; i < out; ++i)
        for (int j = 0; j < in; ++j) w(i, j) = uniform(rng, -r, r);
      for (int i = 0; i < out; ++i) b[i] = uniform(rng, -r, r);
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  return p;
}

Vec mlp_forward(const MlpParams& params, const Vec& demand, MlpCache* cache) {
  if (demand.size() != params.n_inputs()) {
    fail(ErrorCode::DimensionMismatch,
         fmt::format("input has {} entries, network expects {}", demand.size(), params.n_inputs()));
  }
  Vec h = (demand - params.input_mean).cwiseQuotient(params.input_std);
  if (cache) {
    cache->params_fingerprint = params.fingerprint();
    cache->inputs.clear();
    cache->preactivations.clear();
  }
  const int layers = params.n_layers();
  for (int k = 0; k < layers; ++k) {
    Vec a = params.weights[k] * h + params.biases[k];
    if (cache) {
      cache->inputs.push_back(h);
      cache->preactivations.push_back(a);
    }
    if (k + 1 < layers) {
      h = a.unaryExpr([](double x) { return elu(x); });
    } else {
      const double eta = params.eta;
      h = a.unaryExpr([eta](double x) { return sigmoid(eta * x); });
    }
  }
  if (cache) cache->output = h;
  return h;
}

MlpGrads backprop(const MlpParams& params, const MlpCache& cache, const Vec& dloss_dzhat) {
  const int layers = params.n_layers();
  if (static_cast<int>(cache.preactivations.size()) != layers || cache.params_fingerprint != params.fingerprint()) {
    fail(ErrorCode::StaleCache, "cache was produced by different parameters");
  }
  if (dloss_dzhat.size() != params.n_outputs()) {
    fail(ErrorCode::DimensionMismatch,
         fmt::format("output gradient has {} entries, network has {} outputs", dloss_dzhat.size(), params.n_outputs()));
  }
  MlpGrads g = MlpGrads::zeros_like(params);
  // d sigmoid(eta a)/da = eta s (1 - s)
  Vec delta = (dloss_dzhat.array() * params.eta * cache.output.array() * (1.0 - cache.output.array())).matrix();
  for (int k = layers - 1; k >= 0; --k) {
    g.weights[k] = delta * cache.inputs[k].transpose();
    g.biases[k] = delta;
    if (k == 0) break;
    const Vec back = params.weights[k].transpose() * delta;
    delta = back.cwiseProduct(cache.preactivations[k - 1].unaryExpr([](double x) { return elu_grad(x); }));
  }
  return g;
}

AdamWState AdamWState::for_params(const MlpParams& p, double lr, double weight_decay) {
  AdamWState s;
  s.m = Vec::Zero(static_cast<Eigen::Index>(p.n_params()));
  s.v = Vec::Zero(s.m.size());
  s.lr = lr;
  s.weight_decay = weight_decay;
  return s;
}

void adamw_step(MlpParams& params, const MlpGrads& grads, AdamWState& state) {
  Vec p = params.flat();
  const Vec g = grads.flat();
  if (g.size() != p.size() || state.m.size() != p.size() || state.v.size() != p.size()) {
    fail(ErrorCode::DimensionMismatch, "optimizer state, gradients and parameters differ in size");
  }
  ++state.step;
  p *= 1.0 - state.lr * state.weight_decay;
  state.m = state.beta1 * state.m + (1.0 - state.beta1) * g;
  state.v = state.beta2 * state.v + (1.0 - state.beta2) * g.cwiseAbs2();
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double m_hat = state.m[i] / bc1;
    const double v_hat = state.v[i] / bc2;
    p[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
  params.set_flat(p);
}

void fit_standardizer(MlpParams& params, const std::vector<Vec>& samples) {
  const int n = params.n_inputs();
  Vec mean = Vec::Zero(n);
  Vec sd = Vec::Ones(n);
  if (!samples.empty()) {
    for (const Vec& s : samples) mean += s;
    mean /= static_cast<double>(samples.size());
    Vec var = Vec::Zero(n);
    for (const Vec& s : samples) var += (s - mean).cwiseAbs2();
    var /= static_cast<double>(samples.size());
    for (int i = 0; i < n; ++i) {
      const double v = std::sqrt(var[i]);
      sd[i] = v > 1e-12 * (1.0 + std::abs(mean[i])) ? v : 1.0;
    }
  }
  params.input_mean = mean;
  params.input_std = sd;
}

namespace {

std::vector<double> to_std(const Vec& v) { return {v.data(), v.data() + v.size()}; }

Vec from_std(const std::vector<double>& v) { return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size())); }

}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& ck) {
  const MlpParams& p = ck.params;
  nlohmann::json layers = nlohmann::json::array();
  for (int k = 0; k < p.n_layers(); ++k) {
    std::vector<double> w;
    w.reserve(p.weights[k].size());
    for (Eigen::Index r = 0; r < p.weights[k].rows(); ++r)
      for (Eigen::Index c = 0; c < p.weights[k].cols(); ++c) w.push_back(p.weights[k](r, c));
    layers.push_back({{"weights", w}, {"bias", to_std(p.biases[k])}});
  }
  return {{"format", "otsforge-checkpoint"},
          {"version", 1},
          {"layer_dims", p.layer_dims},
          {"eta", p.eta},
          {"input_mean", to_std(p.input_mean)},
          {"input_std", to_std(p.input_std)},
          {"layers", layers},
          {"seed", ck.seed},
          {"metadata", ck.metadata}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  Checkpoint ck;
  try {
    if (j.at("format") != "otsforge-checkpoint") fail(ErrorCode::InvalidArgument, "not a checkpoint file");
    MlpParams& p = ck.params;
    p.layer_dims = j.at("layer_dims").get<std::vector<int>>();
    p.eta = j.at("eta").get<double>();
    p.input_mean = from_std(j.at("input_mean").get<std::vector<double>>());
    p.input_std = from_std(j.at("input_std").get<std::vector<double>>());
    const auto& layers = j.at("layers");
    if (p.layer_dims.size() != layers.size() + 1) fail(ErrorCode::InvalidArgument, "layer count mismatch");
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const int out = p.layer_dims[k + 1];
      const int in = p.layer_dims[k];
      const auto w = layers[k].at("weights").get<std::vector<double>>();
      const auto b = layers[k].at("bias").get<std::vector<double>>();
      if (w.size() != static_cast<std::size_t>(out) * in || b.size() != static_cast<std::size_t>(out)) {
        fail(ErrorCode::InvalidArgument, fmt::format("layer {} has the wrong number of values", k));
      }
      Mat m(out, in);
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) m(r, c) = w[static_cast<std::size_t>(r) * in + c];
      p.weights.push_back(std::move(m));
      p.biases.push_back(from_std(b));
    }
    if (p.input_mean.size() != p.n_inputs() || p.input_std.size() != p.n_inputs()) {
      fail(ErrorCode::InvalidArgument, "normalization size mismatch");
    }
    ck.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("metadata")) ck.metadata = j.at("metadata");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, fmt::format("checkpoint: {}", e.what()));
  }
  return ck;
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, fmt::format("cannot write {}", path));
  out << checkpoint_to_json(ck).dump(1) << '\n';
  if (!out) fail(ErrorCode::Io, fmt::format("write failed: {}", path));
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, fmt::format("cannot open {}", path));
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::InvalidArgument, fmt::format("{}: {}", path, e.what()));
  }
  return checkpoint_from_json(j);
}

}  // namespace otsforge
