#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "otsforge/dispatch.hpp"

namespace otsforge {

enum class Split { Train, Val, Test };
enum class LoadMode { PerBus, Global };

std::string_view to_string(Split s);
std::string_view to_string(LoadMode m);
LoadMode parse_load_mode(std::string_view s);

struct ScenarioConfig {
  double low = 1.00;
  double high = 1.10;
  LoadMode mode = LoadMode::PerBus;
  std::uint64_t seed = 0;
  // Worker threads for feasibility screening; results do not depend on it.
  int jobs = 1;
  DispatchOptions dispatch;
};

struct Dataset {
  std::vector<Vec> samples;  // p.u. demand per bus
  std::vector<Split> split;
  double low = 1.0;
  double high = 1.1;
  LoadMode mode = LoadMode::PerBus;
  std::uint64_t seed = 0;
  std::uint64_t network_fingerprint = 0;
  long draws = 0;  // candidates drawn, including discarded ones

  int size() const { return static_cast<int>(samples.size()); }
  int count(Split s) const;
  std::vector<int> indices(Split s) const;
  std::vector<Vec> subset(Split s) const;
};

// Draws scaled demands, keeps those whose all-closed DC-OPF is optimal, and
// labels the kept samples train/val/test in ratio 3:1:2 after a seeded
// shuffle. Gives up with YieldTooLow after 20 * n_target draws.
Dataset generate(const Network& net, int n_target, const ScenarioConfig& cfg);

// Sizes of the 3:1:2 split for n samples.
struct SplitSizes {
  int train, val, test;
};
SplitSizes split_sizes(int n);

// Text format, one sample per line after a short header; see README.
void write_dataset(std::ostream& out, const Dataset& d);
Dataset read_dataset(std::istream& in);
void save_dataset(const Dataset& d, const std::string& path);
Dataset load_dataset(const std::string& path);

// Throws FingerprintMismatch unless the dataset was generated from net.
void check_fingerprint(const Dataset& d, const Network& net);

}  // namespace otsforge
