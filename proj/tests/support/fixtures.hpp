#pragma once

#include <string>

#include "otsforge/matpower_case.hpp"
#include "otsforge/network.hpp"

namespace otsforge::testing {

inline std::string data_path(const std::string& name) { return std::string(OTSFORGE_DATA_DIR) + "/" + name; }

inline RawCase load_fixture(const std::string& name) { return load_case_file(data_path(name)); }

inline Network fixture_network(const std::string& name, double theta_bound = 0.5) {
  return build_network(load_fixture(name), theta_bound);
}

}  // namespace otsforge::testing
