#include "otsforge/matpower_case.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fmt/format.h>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "otsforge/error.hpp"

namespace otsforge {
namespace {

struct Row {
  int line = 0;
  std::vector<std::string> tokens;
};

struct Table {
  int line = 0;
  std::vector<Row> rows;
};

struct Scanned {
  std::string name;
  std::map<std::string, Table> tables;
  std::map<std::string, std::pair<int, std::string>> scalars;
};

std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\'') quoted = !quoted;
    if (!quoted && (line[i] == '%' || line[i] == '#')) return line.substr(0, i);
  }
  return line;
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// Line-oriented scanner for `mpc.<field> = ...` statements. Matrices may span
// many lines; rows end at ';' or a newline.
Scanned scan(std::istream& in) {
  Scanned out;
  enum class Mode { Top, Matrix, Skip } mode = Mode::Top;
  std::string current;
  Row row;
  int skip_depth = 0;
  std::string raw;
  int line_no = 0;

  auto flush_row = [&](int line) {
    if (!row.tokens.empty()) {
      out.tables[current].rows.push_back(std::move(row));
    }
    row = Row{};
    row.line = line;
  };

  auto consume_matrix = [&](std::string_view body, int line) {
    std::string tok;
    auto push_tok = [&] {
      if (!tok.empty()) {
        if (row.tokens.empty()) row.line = line;
        row.tokens.push_back(tok);
        tok.clear();
      }
    };
    for (std::size_t i = 0; i < body.size(); ++i) {
      const char c = body[i];
      if (c == ']') {
        push_tok();
        flush_row(line);
        mode = Mode::Top;
        return std::string(body.substr(i + 1));
      }
      if (c == ';') {
        push_tok();
        flush_row(line);
      } else if (std::isspace(static_cast<unsigned char>(c)) || c == ',') {
        push_tok();
      } else {
        tok.push_back(c);
      }
    }
    push_tok();
    flush_row(line);
    return std::string();
  };

  while (std::getline(in, raw)) {
    ++line_no;
    std::string line = strip_comment(raw);
    while (!line.empty()) {
      if (mode == Mode::Matrix) {
        line = consume_matrix(line, line_no);
        continue;
      }
      if (mode == Mode::Skip) {
        std::size_t i = 0;
        for (; i < line.size() && skip_depth > 0; ++i) {
          if (line[i] == '{') ++skip_depth;
          if (line[i] == '}') --skip_depth;
        }
        if (skip_depth == 0) mode = Mode::Top;
        line = line.substr(i);
        continue;
      }
      const std::string t = trim(line);
      if (t.rfind("function", 0) == 0) {
        const auto eq = t.find('=');
        if (eq != std::string::npos) out.name = trim(t.substr(eq + 1));
        break;
      }
      const auto pos = t.find("mpc.");
      const auto eq = t.find('=');
      if (pos != 0 || eq == std::string::npos) break;
      const std::string field = trim(t.substr(4, eq - 4));
      std::string rhs = trim(t.substr(eq + 1));
      if (!rhs.empty() && rhs[0] == '[') {
        mode = Mode::Matrix;
        current = field;
        out.tables[current] = Table{line_no, {}};
        row = Row{};
        row.line = line_no;
        line = rhs.substr(1);
      } else if (!rhs.empty() && rhs[0] == '{') {
        mode = Mode::Skip;
        skip_depth = 1;
        line = rhs.substr(1);
      } else {
        const auto semi = rhs.find(';');
        out.scalars[field] = {line_no, trim(rhs.substr(0, semi))};
        break;
      }
    }
  }
  return out;
}

double to_double(const std::string& tok, const std::string& table, int line) {
  const char* begin = tok.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0') {
    fail(ErrorCode::MalformedRow,
         fmt::format("table '{}' line {}: non-numeric field '{}'", table, line, tok));
  }
  return v;
}

int to_int(const std::string& tok, const std::string& table, int line) {
  const double v = to_double(tok, table, line);
  if (v != std::floor(v) || std::abs(v) > 2e9) {
    fail(ErrorCode::MalformedRow,
         fmt::format("table '{}' line {}: expected integer, got '{}'", table, line, tok));
  }
  return static_cast<int>(v);
}

const Table& require_table(const Scanned& s, const std::string& name) {
  const auto it = s.tables.find(name);
  if (it == s.tables.end()) fail(ErrorCode::MissingTable, "mpc." + name);
  return it->second;
}

void require_width(const Row& r, std::size_t min_cols, const std::string& table) {
  if (r.tokens.size() < min_cols) {
    fail(ErrorCode::MalformedRow,
         fmt::format("table '{}' line {}: {} fields, expected at least {}", table, r.line,
                     r.tokens.size(), min_cols));
  }
}

}  // namespace

RawCase parse_case(std::istream& in) {
  const Scanned s = scan(in);
  RawCase rc;
  rc.name = s.name;

  const auto base = s.scalars.find("baseMVA");
  if (base == s.scalars.end()) fail(ErrorCode::MissingTable, "mpc.baseMVA");
  rc.base_mva = to_double(base->second.second, "baseMVA", base->second.first);
  if (!(rc.base_mva > 0.0)) fail(ErrorCode::InvalidCase, "baseMVA must be positive");

  const Table& bus = require_table(s, "bus");
  const Table& gen = require_table(s, "gen");
  const Table& branch = require_table(s, "branch");
  const Table& gencost = require_table(s, "gencost");

  std::set<int> bus_ids;
  for (const Row& r : bus.rows) {
    require_width(r, 13, "bus");
    BusRow b;
    b.bus_id = to_int(r.tokens[0], "bus", r.line);
    b.bus_type = to_int(r.tokens[1], "bus", r.line);
    b.pd = to_double(r.tokens[2], "bus", r.line);
    if (b.bus_type < 1 || b.bus_type > 4) {
      fail(ErrorCode::MalformedRow, fmt::format("table 'bus' line {}: bus type {}", r.line, b.bus_type));
    }
    if (!bus_ids.insert(b.bus_id).second) {
      fail(ErrorCode::InvalidCase, fmt::format("duplicate bus id {}", b.bus_id));
    }
    rc.bus_rows.push_back(b);
  }

  std::vector<bool> gen_in_service;
  for (const Row& r : gen.rows) {
    require_width(r, 10, "gen");
    GenRow g;
    g.bus_id = to_int(r.tokens[0], "gen", r.line);
    g.status = to_int(r.tokens[7], "gen", r.line);
    g.pmax = to_double(r.tokens[8], "gen", r.line);
    g.pmin = to_double(r.tokens[9], "gen", r.line);
    if (!bus_ids.contains(g.bus_id)) {
      fail(ErrorCode::InvalidCase, fmt::format("gen on line {} references unknown bus {}", r.line, g.bus_id));
    }
    gen_in_service.push_back(g.status > 0);
    if (g.status > 0) {
      if (g.pmin > g.pmax) {
        fail(ErrorCode::InvalidCase, fmt::format("gen on line {} has Pmin > Pmax", r.line));
      }
      rc.gen_rows.push_back(g);
    }
  }

  for (const Row& r : branch.rows) {
    require_width(r, 13, "branch");
    BranchRow br;
    br.from_bus = to_int(r.tokens[0], "branch", r.line);
    br.to_bus = to_int(r.tokens[1], "branch", r.line);
    br.x = to_double(r.tokens[3], "branch", r.line);
    br.rate_a = to_double(r.tokens[5], "branch", r.line);
    br.status = to_int(r.tokens[10], "branch", r.line);
    if (!bus_ids.contains(br.from_bus) || !bus_ids.contains(br.to_bus)) {
      fail(ErrorCode::InvalidCase, fmt::format("branch on line {} references unknown bus", r.line));
    }
    if (br.status == 0) continue;
    if (br.x == 0.0) fail(ErrorCode::InvalidCase, fmt::format("branch on line {} has zero reactance", r.line));
    if (br.from_bus == br.to_bus) {
      fail(ErrorCode::InvalidCase, fmt::format("branch on line {} is a self-loop", r.line));
    }
    if (br.rate_a < 0.0) fail(ErrorCode::InvalidCase, fmt::format("branch on line {} has negative rating", r.line));
    rc.branch_rows.push_back(br);
  }

  const std::size_t total_gens = gen_in_service.size();
  const std::size_t live_gens = rc.gen_rows.size();
  if (gencost.rows.size() != total_gens && gencost.rows.size() != live_gens) {
    fail(ErrorCode::InvalidCase,
         fmt::format("gencost has {} rows; expected {} (all gens) or {} (in service)",
                     gencost.rows.size(), total_gens, live_gens));
  }
  const bool aligned_with_all = gencost.rows.size() == total_gens;
  for (std::size_t k = 0; k < gencost.rows.size(); ++k) {
    const Row& r = gencost.rows[k];
    if (aligned_with_all && !gen_in_service[k]) continue;
    require_width(r, 4, "gencost");
    GencostRow c;
    c.model = to_int(r.tokens[0], "gencost", r.line);
    c.n_coeff = to_int(r.tokens[3], "gencost", r.line);
    if (c.model != 2) {
      fail(ErrorCode::UnsupportedCostModel,
           fmt::format("gencost line {}: model {} (only polynomial model 2 is supported)", r.line, c.model));
    }
    if (c.n_coeff < 2 || c.n_coeff > 3) {
      fail(ErrorCode::UnsupportedCostModel,
           fmt::format("gencost line {}: {} coefficients (expected 2 or 3)", r.line, c.n_coeff));
    }
    require_width(r, 4 + static_cast<std::size_t>(c.n_coeff), "gencost");
    for (int i = 0; i < c.n_coeff; ++i) c.coeffs.push_back(to_double(r.tokens[4 + i], "gencost", r.line));
    if (c.n_coeff == 3 && c.coeffs[0] < 0.0) {
      fail(ErrorCode::InvalidCase, fmt::format("gencost line {}: negative quadratic coefficient", r.line));
    }
    rc.gencost_rows.push_back(std::move(c));
  }
  return rc;
}

RawCase parse_case_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_case(in);
}

RawCase load_case_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open case file " + path);
  return parse_case(in);
}

std::string serialize_case(const RawCase& rc) {
  std::string out;
  out += fmt::format("function mpc = {}\n", rc.name.empty() ? "case" : rc.name);
  out += "mpc.version = '2';\n";
  out += fmt::format("mpc.baseMVA = {:.17g};\n\n", rc.base_mva);

  out += "%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin\nmpc.bus = [\n";
  for (const auto& b : rc.bus_rows) {
    out += fmt::format("\t{}\t{}\t{:.17g}\t0\t0\t0\t1\t1\t0\t1\t1\t1.1\t0.9;\n", b.bus_id, b.bus_type, b.pd);
  }
  out += "];\n\n%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin\nmpc.gen = [\n";
  for (const auto& g : rc.gen_rows) {
    out += fmt::format("\t{}\t0\t0\t0\t0\t1\t{:.17g}\t{}\t{:.17g}\t{:.17g};\n", g.bus_id, rc.base_mva, g.status,
                       g.pmax, g.pmin);
  }
  out += "];\n\n%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax\nmpc.branch = [\n";
  for (const auto& br : rc.branch_rows) {
    out += fmt::format("\t{}\t{}\t0\t{:.17g}\t0\t{:.17g}\t0\t0\t0\t0\t{}\t-360\t360;\n", br.from_bus, br.to_bus,
                       br.x, br.rate_a, br.status);
  }
  out += "];\n\n%% model startup shutdown n c(n-1) ... c0\nmpc.gencost = [\n";
  for (const auto& c : rc.gencost_rows) {
    out += fmt::format("\t{}\t0\t0\t{}", c.model, c.n_coeff);
    for (double v : c.coeffs) out += fmt::format("\t{:.17g}", v);
    out += ";\n";
  }
  out += "];\n";
  return out;
}

}  // namespace otsforge
