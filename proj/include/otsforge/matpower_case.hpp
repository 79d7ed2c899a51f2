#pragma once

#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace otsforge {

struct BusRow {
  int bus_id = 0;
  int bus_type = 1;  // 1 = PQ, 2 = PV, 3 = reference, 4 = isolated
  double pd = 0.0;   // MW

  bool operator==(const BusRow&) const = default;
};

struct GenRow {
  int bus_id = 0;
  double pmax = 0.0;  // MW
  double pmin = 0.0;  // MW
  int status = 1;

  bool operator==(const GenRow&) const = default;
};

struct BranchRow {
  int from_bus = 0;
  int to_bus = 0;
  double x = 0.0;       // p.u. reactance
  double rate_a = 0.0;  // MW, 0 means unlimited
  int status = 1;

  bool operator==(const BranchRow&) const = default;
};

struct GencostRow {
  int model = 2;
  int n_coeff = 0;
  std::vector<double> coeffs;  // highest degree first

  bool operator==(const GencostRow&) const = default;
};

// The DC-relevant subset of a MATPOWER case. After parse_case only
// in-service generators and branches remain, and gencost rows are aligned
// one-to-one with gen_rows.
struct RawCase {
  std::string name;
  double base_mva = 100.0;
  std::vector<BusRow> bus_rows;
  std::vector<GenRow> gen_rows;
  std::vector<BranchRow> branch_rows;
  std::vector<GencostRow> gencost_rows;

  bool operator==(const RawCase&) const = default;
};

RawCase parse_case(std::istream& in);
RawCase parse_case_string(std::string_view text);
RawCase load_case_file(const std::string& path);

// Writes MATPOWER text that parse_case reads back field-identically.
std::string serialize_case(const RawCase& rc);

}  // namespace otsforge
