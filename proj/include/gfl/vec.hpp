#pragma once

// Small dense-vector helpers shared across modules.

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace gfl {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    s += a[i] * b[i];
  }
  return s;
}

inline double squared_norm(const std::vector<double>& v) { return dot(v, v); }

inline double norm(const std::vector<double>& v) { return std::sqrt(squared_norm(v)); }

inline double squared_distance(const std::vector<double>& a,
                               const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double distance(const std::vector<double>& a, const std::vector<double>& b) {
  return std::sqrt(squared_distance(a, b));
}

// dst += scale * src
inline void add_scaled(std::vector<double>& dst, const std::vector<double>& src,
                       double scale) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] += scale * src[i];
  }
}

inline std::vector<double> mean_of(const std::vector<std::vector<double>>& vs) {
  if (vs.empty()) {
    throw std::invalid_argument("mean_of: empty collection");
  }
  std::vector<double> out(vs.front().size(), 0.0);
  for (const auto& v : vs) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += v[i];
    }
  }
  const double inv = 1.0 / static_cast<double>(vs.size());
  for (double& x : out) {
    x *= inv;
  }
  return out;
}

}  // namespace gfl
