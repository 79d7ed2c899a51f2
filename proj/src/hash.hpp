#pragma once

#include <cstdint>
#include <string_view>

#include "otsforge/network.hpp"

namespace otsforge::detail {

struct Fnv1a {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ULL;
    }
  }
  void value(double v) { bytes(&v, sizeof v); }
  void value(int v) {
    const std::int64_t w = v;
    bytes(&w, sizeof w);
  }
  void text(std::string_view s) { bytes(s.data(), s.size()); }
  void vec(const Vec& v) {
    value(static_cast<int>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) value(v[i]);
  }
};

}  // namespace otsforge::detail
