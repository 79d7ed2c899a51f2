#include "otsforge/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <optional>
#include <sstream>

#include "hash.hpp"
#include "otsforge/diff_opf.hpp"
#include "otsforge/error.hpp"
#include "otsforge/matpower_case.hpp"
#include "otsforge/neural.hpp"
#include "otsforge/ots.hpp"
#include "otsforge/parallel.hpp"
#include "otsforge/scenarios.hpp"
#include "otsforge/trainer.hpp"

namespace otsforge::cli {

namespace {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

// 9 significant digits everywhere a float is printed.
double r9(double x) {
  if (!std::isfinite(x)) return x;
  return std::stod(fmt::format("{:.9g}", x));
}

std::string g9(double x) { return fmt::format("{:.9g}", x); }

std::string k2(double cost) { return fmt::format("{:.2f}", cost / 1000.0); }

double k2num(double cost) { return std::round(cost / 10.0) / 100.0; }

json r9vec(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(r9(v[i]));
  return a;
}

json finite_or_null(double x) { return std::isfinite(x) ? json(r9(x)) : json(nullptr); }

std::string hex64(std::uint64_t h) { return fmt::format("{:016x}", h); }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, fmt::format("cannot open {}", path));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, fmt::format("cannot write {}", path));
  out << content;
  if (!out) fail(ErrorCode::Io, fmt::format("write failed: {}", path));
}

std::string file_hash(const std::string& path) {
  detail::Fnv1a h;
  h.text(read_file(path));
  return "fnv1a64:" + hex64(h.h);
}

std::uint64_t env_seed() {
  const char* s = std::getenv("OTSFORGE_SEED");
  if (!s || !*s) return 0;
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(s, &used, 0);
    if (used != std::string_view(s).size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::InvalidArgument, fmt::format("OTSFORGE_SEED='{}' is not an unsigned integer", s));
  }
}

struct Common {
  std::string case_path;
  double theta_max = 0.5;
  double unlimited_factor = 10.0;
  int jobs = default_jobs();
  bool deterministic = false;
  std::string out_path;

  int workers() const { return deterministic ? 1 : std::max(1, jobs); }
};

// Per-invocation bookkeeping for the manifest written beside each output.
struct Run {
  std::string command;
  std::vector<std::string> args;
  Clock::time_point start = Clock::now();
  json config = json::object();
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::array();
  bool deterministic = false;

  void input(const std::string& path) { inputs[path] = file_hash(path); }

  json manifest() const {
    json m;
    m["tool"] = "otsforge";
    m["version"] = OTSFORGE_VERSION;
    m["command"] = command;
    m["args"] = args;
    m["config"] = config;
    m["seeds"] = seeds;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["deterministic"] = deterministic;
    m["wall_seconds"] =
        deterministic ? json(nullptr) : json(r9(std::chrono::duration<double>(Clock::now() - start).count()));
    return m;
  }
};

// Writes content to `path` and records it, or prints it when path is empty.
void emit(Run& run, const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty()) {
    out << content;
    return;
  }
  write_file(path, content);
  run.outputs.push_back(path);
}

void write_manifest(const Run& run, const std::string& primary) {
  if (primary.empty()) return;
  write_file(primary + ".manifest.json", run.manifest().dump(2) + "\n");
}

Network load_network(const Common& c, Run& run) {
  run.input(c.case_path);
  NetworkOptions o;
  o.theta_bound = c.theta_max;
  o.unlimited_rate_factor = c.unlimited_factor;
  run.config["case"] = c.case_path;
  run.config["theta_max"] = c.theta_max;
  run.config["unlimited_rate_factor"] = c.unlimited_factor;
  run.config["jobs"] = c.workers();
  run.deterministic = c.deterministic;
  return build_network(load_case_file(c.case_path), o);
}

void add_common(CLI::App* sub, Common& c, bool with_out = true) {
  sub->add_option("case", c.case_path, "MATPOWER case file")->required()->check(CLI::ExistingFile);
  sub->add_option("--theta-max", c.theta_max, "bus angle bound, rad")->capture_default_str();
  sub->add_option("--unlimited-factor", c.unlimited_factor,
                  "rating for rateA = 0 lines, as a multiple of total demand")
      ->capture_default_str();
  sub->add_option("--jobs", c.jobs, "worker threads")->capture_default_str();
  sub->add_flag("--deterministic", c.deterministic, "one worker and no timings in outputs");
  if (with_out) sub->add_option("--out", c.out_path, "output file (default: stdout)");
}

std::string csv_header(const std::string& kind, const std::vector<std::string>& cols) {
  std::string s = fmt::format("# otsforge {} v1\n", kind);
  for (std::size_t i = 0; i < cols.size(); ++i) s += (i ? "," : "") + cols[i];
  return s + "\n";
}

std::string timing(double ms, bool deterministic) { return deterministic ? "-" : g9(ms); }

json timing_json(double seconds, bool deterministic) {
  return deterministic ? json(nullptr) : json(r9(seconds));
}

// ---- parse ----------------------------------------------------------------

json case_json(const RawCase& rc) {
  json j;
  j["name"] = rc.name;
  j["base_mva"] = r9(rc.base_mva);
  json bus = json::array(), gen = json::array(), branch = json::array(), cost = json::array();
  for (const BusRow& b : rc.bus_rows) bus.push_back({b.bus_id, b.bus_type, r9(b.pd)});
  for (const GenRow& g : rc.gen_rows) gen.push_back({g.bus_id, r9(g.pmax), r9(g.pmin), g.status});
  for (const BranchRow& b : rc.branch_rows) branch.push_back({b.from_bus, b.to_bus, r9(b.x), r9(b.rate_a), b.status});
  for (const GencostRow& c : rc.gencost_rows) {
    json row = {c.model, c.n_coeff};
    for (double v : c.coeffs) row.push_back(r9(v));
    cost.push_back(row);
  }
  j["bus"] = bus;
  j["gen"] = gen;
  j["branch"] = branch;
  j["gencost"] = cost;
  return j;
}

int cmd_parse(const Common& c, bool as_json, Run& run, std::ostream& out) {
  const RawCase rc = load_case_file(c.case_path);
  const Network net = load_network(c, run);
  std::string text;
  if (as_json) {
    json j = case_json(rc);
    j["fingerprint"] = hex64(net.fingerprint());
    text = j.dump(1) + "\n";
  } else {
    double pd = 0.0, pmax = 0.0;
    for (const BusRow& b : rc.bus_rows) pd += b.pd;
    for (const GenRow& g : rc.gen_rows) pmax += g.pmax;
    text = fmt::format(
        "case {}\nbase_mva {}\nbuses {}\ngenerators {}\nlines {}\ntotal_demand_mw {}\ngen_capacity_mw {}\n"
        "cost {}\nfingerprint {}\n",
        rc.name, g9(rc.base_mva), net.n_bus, net.n_gen, net.n_line, g9(pd), g9(pmax),
        net.cost.is_linear() ? "linear" : "quadratic", hex64(net.fingerprint()));
  }
  emit(run, c.out_path, text, out);
  write_manifest(run, c.out_path);
  return 0;
}

// ---- ed / opf / ots ---------------------------------------------------------

struct DispatchRecord {
  std::string status;
  double objective = 0.0;
  Vec p_g;
  Vec theta;
  std::optional<SwitchVector> z;
  double seconds = 0.0;
  json extra = json::object();
};

std::string render_dispatch(const DispatchRecord& r, const Network& net, const std::string& format,
                            const std::string& command, bool deterministic) {
  if (format == "csv") {
    std::string s = csv_header(command, {"quantity", "index", "value"});
    s += fmt::format("status,,{}\nobjective,,{}\nobjective_k,,{}\n", r.status, g9(r.objective), k2(r.objective));
    for (Eigen::Index g = 0; g < r.p_g.size(); ++g) s += fmt::format("p_g_mw,{},{}\n", g, g9(r.p_g[g] * net.base_mva));
    for (Eigen::Index b = 0; b < r.theta.size(); ++b) s += fmt::format("theta_rad,{},{}\n", b, g9(r.theta[b]));
    if (r.z) {
      for (int l = 0; l < r.z->size(); ++l) s += fmt::format("z,{},{}\n", l, g9((*r.z)[l]));
    }
    for (auto& [k, v] : r.extra.items()) s += fmt::format("{},,{}\n", k, v.is_string() ? v.get<std::string>() : v.dump());
    s += fmt::format("seconds,,{}\n", deterministic ? "-" : g9(r.seconds));
    return s;
  }
  json j;
  j["command"] = command;
  j["status"] = r.status;
  j["objective"] = r9(r.objective);
  j["objective_k"] = k2num(r.objective);
  j["p_g_mw"] = r9vec(r.p_g * net.base_mva);
  if (r.theta.size()) j["theta_rad"] = r9vec(r.theta);
  if (r.z) j["z"] = r9vec(r.z->values());
  for (auto& [k, v] : r.extra.items()) j[k] = v;
  j["seconds"] = timing_json(r.seconds, deterministic);
  return j.dump(2) + "\n";
}

SwitchVector read_z_file(const std::string& path, int n_line) {
  std::string text = read_file(path);
  for (char& ch : text)
    if (ch == ',' || ch == ';') ch = ' ';
  std::istringstream in(text);
  std::vector<double> v;
  std::string tok;
  while (in >> tok) {
    if (tok[0] == '#') {
      std::getline(in, tok);
      continue;
    }
    try {
      v.push_back(std::stod(tok));
    } catch (const std::exception&) {
      fail(ErrorCode::InvalidArgument, fmt::format("{}: '{}' is not a number", path, tok));
    }
  }
  if (static_cast<int>(v.size()) != n_line) {
    fail(ErrorCode::DimensionMismatch, fmt::format("{} holds {} statuses, network has {} lines", path, v.size(), n_line));
  }
  Vec z = Eigen::Map<Vec>(v.data(), n_line);
  const bool binary = (z.array() == 0.0 || z.array() == 1.0).all();
  return binary ? SwitchVector::binary(z) : SwitchVector::relaxed(z);
}

int cmd_dispatch(const std::string& command, const Common& c, double scale, const std::string& format,
                 const std::string& z_path, const std::string& mode, double time_limit, long node_limit, int max_open,
                 Run& run, std::ostream& out) {
  const Network net = load_network(c, run);
  run.config["load_scale"] = scale;
  run.config["format"] = format;
  const Vec demand = scale * net.nominal_demand;
  DispatchRecord r;
  const auto t0 = Clock::now();
  if (command == "ed") {
    const DispatchSolution s = solve_ed(net, demand);
    r.status = std::string(to_string(s.status));
    r.objective = s.objective;
    r.p_g = s.p_g;
  } else if (command == "opf") {
    SwitchVector z = SwitchVector::all_closed(net.n_line);
    if (!z_path.empty()) {
      run.input(z_path);
      run.config["z_file"] = z_path;
      z = read_z_file(z_path, net.n_line);
    }
    const DispatchSolution s = solve_dcopf(net, demand, z);
    r.status = std::string(to_string(s.status));
    r.objective = s.objective;
    r.p_g = s.p_g;
    r.theta = s.theta;
    r.z = z;
    if (!s.optimal()) {
      fail(ErrorCode::InfeasibleDemand, fmt::format("DC-OPF returned {} for this topology", r.status));
    }
  } else {
    OtsOptions o;
    if (mode == "bb") o.mode = OtsMode::BranchAndBound;
    else if (mode == "exhaustive") o.mode = OtsMode::Exhaustive;
    else fail(ErrorCode::InvalidArgument, fmt::format("mode '{}' (expected bb or exhaustive)", mode));
    if (time_limit > 0) o.budget.time_limit_s = time_limit;
    if (node_limit > 0) o.budget.node_limit = node_limit;
    o.max_open_lines = max_open;
    run.config["mode"] = mode;
    run.config["time_limit_s"] = finite_or_null(o.budget.time_limit_s);
    run.config["max_open_lines"] = max_open;
    const OtsSolution s = solve_ots_exact(net, demand, o);
    r.status = s.proved_optimal ? "Optimal" : "BudgetExhausted";
    r.objective = s.objective;
    r.p_g = s.dispatch.p_g;
    r.theta = s.dispatch.theta;
    r.z = s.z;
    json open = json::array();
    for (int l = 0; l < s.z.size(); ++l)
      if (s.z[l] < 0.5) open.push_back(l);
    r.extra["open_lines"] = open;
    r.extra["nodes"] = s.nodes_explored;
    r.extra["proved_optimal"] = s.proved_optimal;
    r.extra["root_bound"] = finite_or_null(s.root_bound);
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  emit(run, c.out_path, render_dispatch(r, net, format, command, c.deterministic), out);
  write_manifest(run, c.out_path);
  return 0;
}

// ---- gen-data ---------------------------------------------------------------

int cmd_gen_data(const Common& c, int n, const std::string& mode, double low, double high, std::uint64_t seed,
                 Run& run, std::ostream& out) {
  if (c.out_path.empty()) fail(ErrorCode::InvalidArgument, "gen-data needs --out");
  const Network net = load_network(c, run);
  ScenarioConfig cfg;
  cfg.low = low;
  cfg.high = high;
  cfg.mode = parse_load_mode(mode);
  cfg.seed = seed;
  cfg.jobs = c.workers();
  run.config["n"] = n;
  run.config["mode"] = mode;
  run.config["low"] = low;
  run.config["high"] = high;
  run.seeds["scenarios"] = seed;
  const Dataset d = generate(net, n, cfg);
  save_dataset(d, c.out_path);
  run.outputs.push_back(c.out_path);
  write_manifest(run, c.out_path);
  json s = {{"out", c.out_path},
            {"samples", d.size()},
            {"draws", d.draws},
            {"train", d.count(Split::Train)},
            {"val", d.count(Split::Val)},
            {"test", d.count(Split::Test)},
            {"fingerprint", hex64(d.network_fingerprint)}};
  out << s.dump(2) << "\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

std::string histogram_csv(const MlpParams& before, const MlpParams& after, const std::vector<Vec>& samples,
                          int bins) {
  std::vector<long> hb(bins, 0), ha(bins, 0);
  auto bin_of = [&](double v) { return std::clamp(static_cast<int>(v * bins), 0, bins - 1); };
  for (const Vec& d : samples) {
    const Vec zb = mlp_forward(before, d);
    const Vec za = mlp_forward(after, d);
    for (Eigen::Index l = 0; l < zb.size(); ++l) {
      ++hb[bin_of(zb[l])];
      ++ha[bin_of(za[l])];
    }
  }
  std::string s = csv_header("zhat-histogram", {"bin_lo", "bin_hi", "before", "after"});
  for (int b = 0; b < bins; ++b) {
    s += fmt::format("{},{},{},{}\n", g9(static_cast<double>(b) / bins), g9(static_cast<double>(b + 1) / bins), hb[b],
                     ha[b]);
  }
  return s;
}

std::string loss_csv(const TrainHistory& h, bool deterministic) {
  std::string s = csv_header("loss-curve", {"epoch", "train_loss", "train_loss_k", "val_cost", "val_cost_k",
                                            "infeasible_forwards", "updates", "seconds"});
  s += fmt::format("init,,,{},{},,,\n", g9(h.initial_val_cost), k2(h.initial_val_cost));
  for (std::size_t e = 0; e < h.epochs.size(); ++e) {
    const EpochStats& st = h.epochs[e];
    s += fmt::format("{},{},{},{},{},{},{},{}\n", e, g9(st.train_loss), k2(st.train_loss), g9(st.val_cost),
                     k2(st.val_cost), st.infeasible_forwards, st.updates, timing(1e3 * st.seconds, deterministic));
  }
  return s;
}

struct TrainArgs {
  std::string data_path;
  TrainConfig cfg;
  std::string loss_path;
  std::string hist_path;
  int bins = 20;
  bool random_head = false;
};

int cmd_train(const Common& c, TrainArgs a, Run& run, std::ostream& out) {
  if (c.out_path.empty()) fail(ErrorCode::InvalidArgument, "train needs --out");
  const Network net = load_network(c, run);
  run.input(a.data_path);
  const Dataset data = load_dataset(a.data_path);
  a.cfg.custom_head = !a.random_head;
  a.cfg.deterministic = c.deterministic;
  a.cfg.jobs = c.workers();
  const TrainConfig& cfg = a.cfg;
  json jc = {{"data", a.data_path},     {"epochs", cfg.epochs},
             {"batch_size", cfg.batch_size}, {"lr", cfg.lr},
             {"weight_decay", cfg.weight_decay}, {"eta", cfg.eta},
             {"hidden", default_layer_dims(net, cfg.hidden)[1]}, {"custom_head", cfg.custom_head},
             {"lp_regularizer_eps", cfg.lp_regularizer_eps}, {"threshold", cfg.threshold},
             {"infeasible_policy", "skip"}, {"selection", "best validation cost"}};
  run.config.update(jc);
  run.seeds["init_and_shuffle"] = cfg.seed;

  const TrainResult r = train(net, data, cfg);

  Checkpoint ck;
  ck.params = r.params;
  ck.seed = cfg.seed;
  ck.metadata = jc;
  ck.metadata["network_fingerprint"] = hex64(net.fingerprint());
  ck.metadata["dataset_fingerprint"] = hex64(data.network_fingerprint);
  ck.metadata["best_epoch"] = r.history.best_epoch;
  ck.metadata["best_val_cost"] = r9(r.history.best_val_cost);
  ck.metadata["initial_val_cost"] = r9(r.history.initial_val_cost);
  ck.metadata["epochs_run"] = r.history.epochs.size();
  save_checkpoint(ck, c.out_path);
  run.outputs.push_back(c.out_path);

  const std::string loss_path = a.loss_path.empty() ? c.out_path + ".loss.csv" : a.loss_path;
  const std::string hist_path = a.hist_path.empty() ? c.out_path + ".zhat.csv" : a.hist_path;
  emit(run, loss_path, loss_csv(r.history, c.deterministic), out);
  emit(run, hist_path, histogram_csv(r.initial_params, r.params, data.subset(Split::Train), a.bins), out);
  write_manifest(run, c.out_path);

  int infeasible = 0;
  for (const EpochStats& st : r.history.epochs) infeasible += st.infeasible_forwards;
  json s = {{"checkpoint", c.out_path},
            {"loss_curve", loss_path},
            {"histogram", hist_path},
            {"epochs", r.history.epochs.size()},
            {"best_epoch", r.history.best_epoch},
            {"initial_val_cost", r9(r.history.initial_val_cost)},
            {"best_val_cost", r9(r.history.best_val_cost)},
            {"infeasible_forwards", infeasible}};
  out << s.dump(2) << "\n";
  return 0;
}

// ---- eval / bench -----------------------------------------------------------

MlpParams load_model(const std::string& path, const Network& net, Run& run) {
  run.input(path);
  const Checkpoint ck = load_checkpoint(path);
  if (ck.metadata.contains("network_fingerprint") &&
      ck.metadata.at("network_fingerprint").get<std::string>() != hex64(net.fingerprint())) {
    fail(ErrorCode::FingerprintMismatch,
         fmt::format("checkpoint {} was trained on network {}, this network is {}", path,
                     ck.metadata.at("network_fingerprint").get<std::string>(), hex64(net.fingerprint())));
  }
  if (ck.params.n_inputs() != net.n_bus || ck.params.n_outputs() != net.n_line) {
    fail(ErrorCode::DimensionMismatch, fmt::format("checkpoint maps {} inputs to {} outputs; network has {} buses, {} lines",
                                                   ck.params.n_inputs(), ck.params.n_outputs(), net.n_bus, net.n_line));
  }
  return ck.params;
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  fail(ErrorCode::InvalidArgument, fmt::format("split '{}' (expected train, val or test)", s));
}

struct EvalArgs {
  std::string data_path;
  std::string ckpt_path;
  double ots_budget = -1.0;
  std::string split = "test";
  double threshold = 0.5;
};

EvalReport run_eval(const Common& c, const EvalArgs& a, const Network& net, Run& run, bool* has_model) {
  run.input(a.data_path);
  const Dataset data = load_dataset(a.data_path);
  check_fingerprint(data, net);
  std::optional<MlpParams> model;
  if (!a.ckpt_path.empty()) model = load_model(a.ckpt_path, net, run);
  EvalOptions o;
  o.ots_budget_s = a.ots_budget;
  o.threshold = a.threshold;
  o.jobs = c.workers();
  run.config["data"] = a.data_path;
  run.config["checkpoint"] = a.ckpt_path.empty() ? json(nullptr) : json(a.ckpt_path);
  run.config["ots_budget_s"] = a.ots_budget;
  run.config["split"] = a.split;
  run.config["threshold"] = a.threshold;
  *has_model = model.has_value();
  return evaluate(model ? &*model : nullptr, net, data, parse_split(a.split), o);
}

std::string ots_status(const EvalReport& rep, const SampleRecord& r) {
  if (!rep.has_ots) return "skipped";
  return r.ots_solved ? "solved" : "NS";
}

int cmd_eval(const Common& c, const EvalArgs& a, Run& run, std::ostream& out) {
  const Network net = load_network(c, run);
  bool has_model = false;
  const EvalReport rep = run_eval(c, a, net, run, &has_model);
  std::string s = csv_header("eval", {"index", "ed", "opf", "ots", "dadnn", "ed_k", "opf_k", "ots_k", "dadnn_k",
                                      "ots_status", "fallback", "lines_open", "feasibility_residual", "ed_ms", "opf_ms",
                                      "ots_ms", "dadnn_ms"});
  const bool det = c.deterministic;
  for (const SampleRecord& r : rep.records) {
    const bool ots_ok = rep.has_ots && r.ots_solved;
    s += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.index, g9(r.ed), g9(r.opf),
                     ots_ok ? g9(r.ots) : "", has_model ? g9(r.dadnn) : "", k2(r.ed), k2(r.opf),
                     ots_ok ? k2(r.ots) : "", has_model ? k2(r.dadnn) : "", ots_status(rep, r),
                     has_model ? (r.fallback ? "1" : "0") : "", has_model ? std::to_string(r.lines_open) : "",
                     has_model ? g9(r.feasibility_residual) : "", timing(r.ed_ms, det), timing(r.opf_ms, det),
                     rep.has_ots ? timing(r.ots_ms, det) : "", has_model ? timing(r.dadnn_ms, det) : "");
  }
  emit(run, c.out_path, s, out);
  write_manifest(run, c.out_path);
  return 0;
}

int cmd_bench(const Common& c, const EvalArgs& a, Run& run, std::ostream& out) {
  const Network net = load_network(c, run);
  bool has_model = false;
  const EvalReport rep = run_eval(c, a, net, run, &has_model);
  const bool det = c.deterministic;
  std::string s = csv_header("bench", {"method", "mean_cost", "mean_cost_k", "median_ms", "mean_ms", "solved",
                                       "not_solved", "fallback_count", "status"});
  auto row = [&](const char* name, const MethodSummary& m, const std::string& fallback) {
    const bool none = m.solved == 0;
    const std::string status = none ? "NS" : (m.not_solved ? "partial" : "ok");
    s += fmt::format("{},{},{},{},{},{},{},{},{}\n", name, none ? "NS" : g9(m.mean_objective),
                     none ? "NS" : k2(m.mean_objective), timing(m.median_ms, det), timing(m.mean_ms, det), m.solved,
                     m.not_solved, fallback, status);
  };
  row("ED", rep.ed, "");
  row("DC-OPF", rep.opf, "");
  if (rep.has_ots) row("DC-OTS", rep.ots, "");
  if (has_model) row("DA-DNN", rep.dadnn, std::to_string(rep.fallback_count));
  emit(run, c.out_path, s, out);
  write_manifest(run, c.out_path);
  return 0;
}

// ---- gradcheck ----------------------------------------------------------------

int cmd_gradcheck(const Common& c, int trials, std::uint64_t seed, double step, Run& run, std::ostream& out,
                  std::ostream& err) {
  const Network net = load_network(c, run);
  run.config["trials"] = trials;
  run.config["step"] = step;
  run.seeds["draws"] = seed;
  const GradcheckReport rep = run_gradcheck(net, trials, seed, step);
  json recs = json::array();
  for (std::size_t t = 0; t < rep.trials.size(); ++t) {
    const GradcheckTrial& tr = rep.trials[t];
    json r = {{"trial", t}, {"feasible", tr.feasible}, {"scored", tr.scored}};
    if (tr.feasible) {
      r["max_rel_error"] = r9(tr.check.max_rel_error);
      r["complementarity_margin"] = r9(tr.check.complementarity_margin);
      r["solve_residual"] = r9(tr.check.solve_residual);
    }
    recs.push_back(r);
  }
  json j = {{"trials", trials},
            {"scored", rep.scored},
            {"max_rel_error", r9(rep.max_rel_error)},
            {"tolerance", rep.tolerance},
            {"pass", rep.pass()},
            {"records", recs}};
  emit(run, c.out_path, j.dump(2) + "\n", out);
  write_manifest(run, c.out_path);
  if (!rep.pass()) {
    err << json{{"error", "GradcheckFailed"},
                {"command", "gradcheck"},
                {"message", fmt::format("max relative error {:.3g} exceeds {:.3g}", rep.max_rel_error, rep.tolerance)}}
               .dump()
        << "\n";
    return kExitCheckFailed;
  }
  return 0;
}

void error_record(std::ostream& err, const std::string& code, const std::string& command, const std::string& msg) {
  err << json{{"error", code}, {"command", command}, {"message", msg}}.dump() << "\n";
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dispatch-aware transmission switching: baselines, differentiable DC-OPF, training"};
  app.name("otsforge");
  app.require_subcommand(1);
  app.set_version_flag("--version", OTSFORGE_VERSION);

  Common c;
  std::uint64_t seed = 0;
  bool seed_given = false;
  auto seed_opt = [&](CLI::App* sub) {
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& v) {
          seed = v;
          seed_given = true;
        },
        "seed (default: $OTSFORGE_SEED, else 0)");
  };

  bool as_json = false;
  auto* p_parse = app.add_subcommand("parse", "summarize a case, or dump it canonically with --json");
  add_common(p_parse, c);
  p_parse->add_flag("--json", as_json, "canonical structured dump");

  double scale = 1.0;
  std::string format = "json";
  std::string z_path, mode = "bb";
  double time_limit = 0.0;
  long node_limit = 0;
  int max_open = -1;
  auto dispatch_opts = [&](CLI::App* sub) {
    add_common(sub, c);
    sub->add_option("--scale", scale, "multiply every nominal demand")->capture_default_str();
    sub->add_option("--format", format, "json or csv")->check(CLI::IsMember({"json", "csv"}))->capture_default_str();
  };
  auto* p_ed = app.add_subcommand("ed", "economic dispatch (no network)");
  dispatch_opts(p_ed);
  auto* p_opf = app.add_subcommand("opf", "DC-OPF for one topology");
  dispatch_opts(p_opf);
  p_opf->add_option("--z", z_path, "line statuses, one number per line in case order (default: all closed)")
      ->check(CLI::ExistingFile);
  auto* p_ots = app.add_subcommand("ots", "exact DC optimal transmission switching");
  dispatch_opts(p_ots);
  p_ots->add_option("--mode", mode, "bb or exhaustive")->check(CLI::IsMember({"bb", "exhaustive"}))->capture_default_str();
  p_ots->add_option("--time-limit", time_limit, "seconds (0: none)")->capture_default_str();
  p_ots->add_option("--node-limit", node_limit, "branch-and-bound nodes (0: none)")->capture_default_str();
  p_ots->add_option("--max-open", max_open, "at most this many open lines (-1: any)")->capture_default_str();

  int n = 3000;
  std::string load_mode = "perbus";
  double low = 1.0, high = 1.1;
  auto* p_gen = app.add_subcommand("gen-data", "draw feasible demand scenarios and split them 3:1:2");
  add_common(p_gen, c);
  p_gen->add_option("--n", n, "samples to keep")->capture_default_str();
  p_gen->add_option("--mode", load_mode, "perbus or global")->capture_default_str();
  p_gen->add_option("--low", low, "lowest loading factor")->capture_default_str();
  p_gen->add_option("--high", high, "highest loading factor")->capture_default_str();
  seed_opt(p_gen);

  TrainArgs ta;
  auto* p_train = app.add_subcommand("train", "train the switching network through the DC-OPF layer");
  add_common(p_train, c);
  p_train->add_option("--data", ta.data_path, "dataset file")->required()->check(CLI::ExistingFile);
  p_train->add_option("--eta", ta.cfg.eta, "sigmoid sharpness")->capture_default_str();
  p_train->add_option("--lr", ta.cfg.lr, "AdamW learning rate")->capture_default_str();
  p_train->add_option("--wd", ta.cfg.weight_decay, "AdamW weight decay")->capture_default_str();
  p_train->add_option("--epochs", ta.cfg.epochs)->capture_default_str();
  p_train->add_option("--batch", ta.cfg.batch_size)->capture_default_str();
  p_train->add_option("--hidden", ta.cfg.hidden, "hidden width (0: 64 up to 100 buses, else 128)")
      ->capture_default_str();
  p_train->add_option("--lp-eps", ta.cfg.lp_regularizer_eps, "quadratic guard for linear costs")->capture_default_str();
  p_train->add_option("--threshold", ta.cfg.threshold, "binarization threshold for validation")
      ->capture_default_str();
  p_train->add_flag("--random-head", ta.random_head, "uniform init for the output layer too");
  p_train->add_option("--loss-csv", ta.loss_path, "loss curve (default: <out>.loss.csv)");
  p_train->add_option("--hist-csv", ta.hist_path, "z-hat histogram before/after (default: <out>.zhat.csv)");
  p_train->add_option("--bins", ta.bins, "histogram bins")->capture_default_str();
  seed_opt(p_train);

  EvalArgs ea;
  auto eval_opts = [&](CLI::App* sub, bool ckpt_required) {
    add_common(sub, c);
    sub->add_option("--data", ea.data_path, "dataset file")->required()->check(CLI::ExistingFile);
    auto* ck = sub->add_option("--ckpt", ea.ckpt_path, "checkpoint")->check(CLI::ExistingFile);
    if (ckpt_required) ck->required();
    sub->add_option("--ots-budget", ea.ots_budget, "seconds per sample for exact switching (negative: skip)")
        ->capture_default_str();
    sub->add_option("--split", ea.split, "train, val or test")->capture_default_str();
    sub->add_option("--threshold", ea.threshold)->capture_default_str();
  };
  auto* p_eval = app.add_subcommand("eval", "per-sample comparison on one split");
  eval_opts(p_eval, true);
  auto* p_bench = app.add_subcommand("bench", "one row per method: mean cost and solve time");
  eval_opts(p_bench, false);

  int trials = 25;
  double step = 1e-5;
  auto* p_grad = app.add_subcommand("gradcheck", "analytic vs finite-difference cost gradients");
  add_common(p_grad, c);
  p_grad->add_option("--trials", trials)->capture_default_str();
  p_grad->add_option("--step", step, "finite-difference step")->capture_default_str();
  seed_opt(p_grad);

  std::vector<std::string> argv_store{"otsforge"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const std::string& s : argv_store) argv.push_back(s.c_str());

  std::string command;
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    const auto subs = app.get_subcommands();
    error_record(err, "Usage", subs.empty() ? "" : subs.front()->get_name(), e.what());
    return kExitUsage;
  }
  command = app.get_subcommands().front()->get_name();

  Run run;
  run.command = command;
  run.args = args;
  try {
    if (!seed_given) seed = env_seed();
    if (*p_parse) return cmd_parse(c, as_json, run, out);
    if (*p_ed || *p_opf || *p_ots) {
      return cmd_dispatch(command, c, scale, format, z_path, mode, time_limit, node_limit, max_open, run, out);
    }
    if (*p_gen) return cmd_gen_data(c, n, load_mode, low, high, seed, run, out);
    if (*p_train) {
      ta.cfg.seed = seed;
      return cmd_train(c, ta, run, out);
    }
    if (*p_eval) return cmd_eval(c, ea, run, out);
    if (*p_bench) return cmd_bench(c, ea, run, out);
    if (*p_grad) return cmd_gradcheck(c, trials, seed, step, run, out, err);
  } catch (const Error& e) {
    error_record(err, std::string(to_string(e.code())), command, e.what());
    return kExitError;
  } catch (const json::exception& e) {
    error_record(err, "InvalidArgument", command, e.what());
    return kExitError;
  } catch (const std::exception& e) {
    error_record(err, "Internal", command, e.what());
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace otsforge::cli
