#include "otsforge/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fmt/format.h>
#include <numeric>

#include "otsforge/error.hpp"
#include "otsforge/parallel.hpp"
#include "otsforge/random.hpp"

namespace otsforge {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double mean(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Mean binarized inference cost over the given samples.
double inference_cost(const MlpParams& params, const Network& net, const std::vector<Vec>& samples, double threshold,
                      const DispatchOptions& opts, int jobs) {
  std::vector<double> cost(samples.size());
  parallel_for(static_cast<int>(samples.size()), jobs,
               [&](int i) { cost[i] = infer(params, net, samples[i], threshold, opts).dispatch.objective; });
  return mean(cost);
}

struct SampleGrad {
  bool feasible = false;
  double loss = 0.0;
  MlpGrads grads;
};

}  // namespace

std::vector<int> default_layer_dims(const Network& net, int hidden) {
  const int h = hidden > 0 ? hidden : (net.n_bus <= 100 ? 64 : 128);
  return {net.n_bus, h, h, net.n_line};
}

SwitchVector binarize(const Vec& z_hat, double threshold) {
  Vec z(z_hat.size());
  for (Eigen::Index i = 0; i < z_hat.size(); ++i) {
    if (!(z_hat[i] >= 0.0 && z_hat[i] <= 1.0)) {
      fail(ErrorCode::InvalidArgument, fmt::format("relaxed status {} = {} outside [0, 1]", i, z_hat[i]));
    }
    z[i] = z_hat[i] >= threshold ? 1.0 : 0.0;
  }
  return SwitchVector::binary(std::move(z));
}

InferResult infer(const MlpParams& params, const Network& net, const Vec& demand, double threshold,
                  const DispatchOptions& opts) {
  const auto t0 = Clock::now();
  InferResult r;
  r.z_hat = mlp_forward(params, demand);
  r.z = binarize(r.z_hat, threshold);
  r.dispatch = solve_dcopf(net, demand, r.z, opts);
  if (!r.dispatch.optimal()) {
    r.used_fallback = true;
    r.z = SwitchVector::all_closed(net.n_line);
    r.dispatch = solve_dcopf(net, demand, r.z, opts);
    if (!r.dispatch.optimal()) {
      fail(ErrorCode::FallbackAlsoInfeasible,
           fmt::format("all-closed DC-OPF returned {}", to_string(r.dispatch.status)));
    }
  }
  r.seconds = seconds_since(t0);
  return r;
}

TrainResult train(const Network& net, const Dataset& data, const TrainConfig& cfg) {
  check_fingerprint(data, net);
  if (cfg.epochs < 0 || cfg.batch_size <= 0 || !(cfg.lr > 0.0) || cfg.weight_decay < 0.0) {
    fail(ErrorCode::InvalidArgument, "epochs, batch size, lr and weight decay must be positive");
  }
  const std::vector<Vec> train_set = data.subset(Split::Train);
  const std::vector<Vec> val_set = data.subset(Split::Val);
  if (train_set.empty()) fail(ErrorCode::InvalidArgument, "dataset has no training samples");
  if (cfg.batch_size > static_cast<int>(train_set.size())) {
    fail(ErrorCode::InvalidArgument,
         fmt::format("batch size {} exceeds the {} training samples", cfg.batch_size, train_set.size()));
  }
  const int jobs = cfg.deterministic ? 1 : std::max(1, cfg.jobs);

  TrainResult out;
  out.params = init_params(cfg.seed, default_layer_dims(net, cfg.hidden), cfg.eta, cfg.custom_head);
  fit_standardizer(out.params, train_set);
  out.initial_params = out.params;
  const std::vector<Vec>& select_set = val_set.empty() ? train_set : val_set;
  out.history.initial_val_cost = inference_cost(out.params, net, select_set, cfg.threshold, cfg.dispatch, jobs);
  out.history.best_val_cost = out.history.initial_val_cost;
  if (cfg.epochs == 0) return out;

  DiffOpfOptions dopts;
  dopts.dispatch = cfg.dispatch;
  if (net.cost.is_linear()) dopts.dispatch.quad_regularizer = cfg.lp_regularizer_eps;

  MlpParams params = out.params;
  AdamWState opt = AdamWState::for_params(params, cfg.lr, cfg.weight_decay);
  Rng rng(cfg.seed ^ 0x5851f42d4c957f2dULL);
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = Clock::now();
    EpochStats st;
    shuffle(order, rng);
    double loss_sum = 0.0;
    int used = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const int nb = static_cast<int>(std::min<std::size_t>(cfg.batch_size, order.size() - start));
      std::vector<SampleGrad> slot(nb);
      parallel_for(nb, jobs, [&](int k) {
        const Vec& d = train_set[order[start + k]];
        MlpCache cache;
        const Vec z_hat = mlp_forward(params, d, &cache);
        const SwitchVector z = SwitchVector::relaxed(z_hat);
        DispatchSolution sol;
        try {
          sol = forward(net, d, z, dopts);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::InfeasibleForward) throw;
          return;  // skipped: no gradient contribution
        }
        const GradResult g = backward(net, d, z, sol, net.cost.gradient(sol.p_g), dopts);
        slot[k].feasible = true;
        slot[k].loss = net.cost.evaluate(sol.p_g);
        slot[k].grads = backprop(params, cache, g.dcost_dz);
      });
      MlpGrads acc = MlpGrads::zeros_like(params);
      int count = 0;
      for (const SampleGrad& s : slot) {  // fixed order keeps the sum reproducible
        if (!s.feasible) {
          ++st.infeasible_forwards;
          continue;
        }
        acc += s.grads;
        loss_sum += s.loss;
        ++count;
      }
      if (count == 0) continue;
      used += count;
      acc *= 1.0 / count;
      adamw_step(params, acc, opt);
      ++st.updates;
    }
    if (used == 0) {
      fail(ErrorCode::AllForwardsInfeasible,
           fmt::format("epoch {}: all {} relaxed forwards were infeasible", epoch, train_set.size()));
    }
    st.train_loss = loss_sum / used;
    st.val_cost = inference_cost(params, net, select_set, cfg.threshold, cfg.dispatch, jobs);
    st.seconds = seconds_since(t0);
    out.history.epochs.push_back(st);
    if (st.val_cost < out.history.best_val_cost) {
      out.history.best_val_cost = st.val_cost;
      out.history.best_epoch = epoch;
      out.params = params;
    }
  }
  return out;
}

EvalReport evaluate(const MlpParams* params, const Network& net, const Dataset& data, Split split,
                    const EvalOptions& opts) {
  check_fingerprint(data, net);
  const std::vector<int> idx = data.indices(split);
  if (idx.empty()) fail(ErrorCode::InvalidArgument, fmt::format("split '{}' is empty", to_string(split)));
  EvalReport rep;
  rep.has_ots = opts.ots_budget_s >= 0.0;
  rep.has_dadnn = params != nullptr;
  rep.records.resize(idx.size());
  const SwitchVector closed = SwitchVector::all_closed(net.n_line);

  parallel_for(static_cast<int>(idx.size()), opts.jobs, [&](int k) {
    SampleRecord& r = rep.records[k];
    r.index = idx[k];
    const Vec& d = data.samples[idx[k]];
    auto t0 = Clock::now();
    r.ed = solve_ed(net, d, opts.dispatch).objective;
    r.ed_ms = 1e3 * seconds_since(t0);

    t0 = Clock::now();
    r.opf = solve_dcopf(net, d, closed, opts.dispatch).objective;
    r.opf_ms = 1e3 * seconds_since(t0);

    if (rep.has_ots) {
      OtsOptions o;
      o.dispatch = opts.dispatch;
      o.budget.time_limit_s = opts.ots_budget_s;
      t0 = Clock::now();
      if (opts.ots_budget_s > 0.0) {
        const OtsSolution s = solve_ots_exact(net, d, o);
        r.ots_solved = s.proved_optimal;
        r.ots_proved = s.proved_optimal;
        r.ots = s.objective;
      }
      r.ots_ms = 1e3 * seconds_since(t0);
    }
    if (rep.has_dadnn) {
      const InferResult inf = infer(*params, net, d, opts.threshold, opts.dispatch);
      r.dadnn = inf.dispatch.objective;
      r.dadnn_ms = 1e3 * inf.seconds;
      r.fallback = inf.used_fallback;
      r.lines_open = inf.z.open_count();
      r.feasibility_residual = check_feasibility(net, d, inf.z, inf.dispatch.p_g, inf.dispatch.theta).worst();
    }
  });

  auto summarize = [&](auto value, auto ms, auto solved) {
    MethodSummary m;
    std::vector<double> vals, times;
    for (const SampleRecord& r : rep.records) {
      times.push_back(ms(r));
      if (solved(r)) {
        vals.push_back(value(r));
        ++m.solved;
      } else {
        ++m.not_solved;
      }
    }
    m.mean_objective = mean(vals);
    m.median_ms = median(times);
    m.mean_ms = mean(times);
    return m;
  };
  auto always = [](const SampleRecord&) { return true; };
  rep.ed = summarize([](const SampleRecord& r) { return r.ed; }, [](const SampleRecord& r) { return r.ed_ms; }, always);
  rep.opf =
      summarize([](const SampleRecord& r) { return r.opf; }, [](const SampleRecord& r) { return r.opf_ms; }, always);
  if (rep.has_ots) {
    rep.ots = summarize([](const SampleRecord& r) { return r.ots; }, [](const SampleRecord& r) { return r.ots_ms; },
                        [](const SampleRecord& r) { return r.ots_solved; });
  }
  if (rep.has_dadnn) {
    rep.dadnn = summarize([](const SampleRecord& r) { return r.dadnn; },
                          [](const SampleRecord& r) { return r.dadnn_ms; }, always);
    for (const SampleRecord& r : rep.records) rep.fallback_count += r.fallback;
  }
  return rep;
}

}  // namespace otsforge
