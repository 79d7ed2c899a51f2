#include "otsforge/scenarios.hpp"

#include <fmt/format.h>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "otsforge/error.hpp"
#include "otsforge/parallel.hpp"
#include "otsforge/random.hpp"

namespace otsforge {

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

std::string_view to_string(LoadMode m) { return m == LoadMode::PerBus ? "perbus" : "global"; }

LoadMode parse_load_mode(std::string_view s) {
  if (s == "perbus") return LoadMode::PerBus;
  if (s == "global") return LoadMode::Global;
  fail(ErrorCode::InvalidArgument, fmt::format("load mode '{}' (expected perbus or global)", s));
}

int Dataset::count(Split s) const { return static_cast<int>(std::count(split.begin(), split.end(), s)); }

std::vector<int> Dataset::indices(Split s) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i)
    if (split[i] == s) out.push_back(i);
  return out;
}

std::vector<Vec> Dataset::subset(Split s) const {
  std::vector<Vec> out;
  for (int i : indices(s)) out.push_back(samples[i]);
  return out;
}

SplitSizes split_sizes(int n) {
  const int train = (3 * n + 3) / 6;
  const int val = (n + 3) / 6;
  return {train, val, n - train - val};
}

Dataset generate(const Network& net, int n_target, const ScenarioConfig& cfg) {
  if (n_target <= 0) fail(ErrorCode::InvalidArgument, "n_target must be positive");
  if (!(cfg.low > 0.0 && cfg.low <= cfg.high)) {
    fail(ErrorCode::InvalidArgument, fmt::format("loading range [{}, {}]", cfg.low, cfg.high));
  }
  if (net.nominal_demand.cwiseAbs().maxCoeff() == 0.0) fail(ErrorCode::InvalidArgument, "network has no demand");

  Dataset d;
  d.low = cfg.low;
  d.high = cfg.high;
  d.mode = cfg.mode;
  d.seed = cfg.seed;
  d.network_fingerprint = net.fingerprint();

  Rng rng(cfg.seed);
  const long budget = 20L * n_target;
  const SwitchVector closed = SwitchVector::all_closed(net.n_line);
  while (d.size() < n_target && d.draws < budget) {
    // Draw a batch in index order, screen it in parallel, accept in order.
    const int batch = static_cast<int>(std::min<long>(std::max(n_target - d.size(), 8), budget - d.draws));
    std::vector<Vec> cand(batch);
    for (int k = 0; k < batch; ++k) {
      Vec f(net.n_bus);
      if (cfg.mode == LoadMode::Global) {
        f.setConstant(uniform(rng, cfg.low, cfg.high));
      } else {
        for (int b = 0; b < net.n_bus; ++b) f[b] = uniform(rng, cfg.low, cfg.high);
      }
      cand[k] = net.nominal_demand.cwiseProduct(f);
    }
    std::vector<char> ok(batch, 0);
    parallel_for(batch, cfg.jobs, [&](int k) {
      ok[k] = solve_dcopf(net, cand[k], closed, cfg.dispatch).optimal() ? 1 : 0;
    });
    for (int k = 0; k < batch && d.size() < n_target; ++k) {
      ++d.draws;
      if (ok[k]) d.samples.push_back(std::move(cand[k]));
    }
  }
  if (d.size() < n_target) {
    fail(ErrorCode::YieldTooLow,
         fmt::format("only {} of {} samples feasible after {} draws", d.size(), n_target, d.draws));
  }

  std::vector<int> order(n_target);
  for (int i = 0; i < n_target; ++i) order[i] = i;
  Rng split_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  shuffle(order, split_rng);
  const SplitSizes sz = split_sizes(n_target);
  d.split.assign(n_target, Split::Test);
  for (int r = 0; r < n_target; ++r) {
    d.split[order[r]] = r < sz.train ? Split::Train : (r < sz.train + sz.val ? Split::Val : Split::Test);
  }
  return d;
}

void write_dataset(std::ostream& out, const Dataset& d) {
  const int n_bus = d.samples.empty() ? 0 : static_cast<int>(d.samples.front().size());
  out << "# otsforge dataset v1\n";
  out << fmt::format("fingerprint {:016x}\n", d.network_fingerprint);
  out << fmt::format("mode {}\nlow {:.17g}\nhigh {:.17g}\nseed {}\ndraws {}\n", to_string(d.mode), d.low, d.high,
                     d.seed, d.draws);
  out << fmt::format("n_bus {}\nsamples {} train {} val {} test {}\n", n_bus, d.size(), d.count(Split::Train),
                     d.count(Split::Val), d.count(Split::Test));
  for (int i = 0; i < d.size(); ++i) {
    std::string line(to_string(d.split[i]));
    for (Eigen::Index b = 0; b < d.samples[i].size(); ++b) line += fmt::format(" {:.17g}", d.samples[i][b]);
    out << line << '\n';
  }
}

namespace {

[[noreturn]] void bad(int line, const std::string& what) {
  fail(ErrorCode::InvalidArgument, fmt::format("dataset line {}: {}", line, what));
}

}  // namespace

Dataset read_dataset(std::istream& in) {
  Dataset d;
  std::string line;
  int lineno = 0;
  int n_bus = -1;
  long expect = -1;
  auto next = [&](std::istringstream& ss) -> bool {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line[0] == '#') continue;
      ss = std::istringstream(line);
      return true;
    }
    return false;
  };
  std::istringstream ss;
  auto header = [&](const char* key) {
    std::string k;
    if (!next(ss) || !(ss >> k) || k != key) bad(lineno, fmt::format("expected '{}'", key));
  };
  header("fingerprint");
  std::string hex;
  ss >> hex;
  try {
    d.network_fingerprint = std::stoull(hex, nullptr, 16);
  } catch (const std::exception&) {
    bad(lineno, "bad fingerprint");
  }
  header("mode");
  std::string mode;
  ss >> mode;
  d.mode = parse_load_mode(mode);
  header("low");
  if (!(ss >> d.low)) bad(lineno, "bad low");
  header("high");
  if (!(ss >> d.high)) bad(lineno, "bad high");
  header("seed");
  if (!(ss >> d.seed)) bad(lineno, "bad seed");
  header("draws");
  if (!(ss >> d.draws)) bad(lineno, "bad draws");
  header("n_bus");
  if (!(ss >> n_bus) || n_bus < 0) bad(lineno, "bad n_bus");
  header("samples");
  if (!(ss >> expect)) bad(lineno, "bad sample count");

  while (next(ss)) {
    std::string label;
    ss >> label;
    Split s;
    if (label == "train") s = Split::Train;
    else if (label == "val") s = Split::Val;
    else if (label == "test") s = Split::Test;
    else bad(lineno, fmt::format("unknown split '{}'", label));
    Vec v(n_bus);
    for (int b = 0; b < n_bus; ++b) {
      std::string tok;
      if (!(ss >> tok)) bad(lineno, fmt::format("expected {} demands", n_bus));
      try {
        std::size_t used = 0;
        v[b] = std::stod(tok, &used);
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        bad(lineno, fmt::format("bad number '{}'", tok));
      }
    }
    std::string extra;
    if (ss >> extra) bad(lineno, "too many values");
    d.samples.push_back(std::move(v));
    d.split.push_back(s);
  }
  if (d.size() != expect) bad(lineno, fmt::format("header promises {} samples, found {}", expect, d.size()));
  return d;
}

void save_dataset(const Dataset& d, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::Io, fmt::format("cannot write {}", path));
  write_dataset(out, d);
  if (!out) fail(ErrorCode::Io, fmt::format("write failed: {}", path));
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, fmt::format("cannot open {}", path));
  return read_dataset(in);
}

void check_fingerprint(const Dataset& d, const Network& net) {
  if (d.network_fingerprint != net.fingerprint()) {
    fail(ErrorCode::FingerprintMismatch,
         fmt::format("dataset was generated for network {:016x}, this network is {:016x}", d.network_fingerprint,
                     net.fingerprint()));
  }
}

}  // namespace otsforge
