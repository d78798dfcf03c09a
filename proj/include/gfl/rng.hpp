#pragma once

// Counter-based deterministic random streams.
//
// Every stochastic choice in the simulator draws from a stream addressed by
// (seed, purpose, a, b, c).  A stream's values depend only on its address and
// its own draw counter, so the order in which streams are consumed never
// affects the values they produce.  Runs with equal seeds are bit-identical,
// and per-entity streams (per iteration, server, client) can be generated in
// parallel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace gfl {

enum class Stream : std::uint64_t {
  client_sigma = 1,
  data_gen = 2,
  client_sampling = 3,
  batch_sampling = 4,
  mask_secrets = 5,
  server_perturbation = 6,
  iid_client_noise = 7,
  iid_server_noise = 8,
  graph_gen = 9,
  repetition = 10,
  probe = 11,
};

namespace detail {

inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

inline std::uint64_t absorb(std::uint64_t key, std::uint64_t v) {
  return mix64((key + 0x9e3779b97f4a7c15ULL) ^ (v * 0xd6e8feb86659fd93ULL));
}

}  // namespace detail

// Maps u in (0,1) to a Laplace(0, scale) sample by inverse CDF; u = 0.5 -> 0.
inline double laplace_from_uniform(double u, double scale) {
  const double x = u - 0.5;
  const double sign = (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
  return -scale * sign * std::log1p(-2.0 * std::abs(x));
}

class RngStream {
 public:
  RngStream(std::uint64_t seed, Stream purpose, std::uint64_t a = 0,
            std::uint64_t b = 0, std::uint64_t c = 0) {
    key_ = detail::absorb(seed, static_cast<std::uint64_t>(purpose));
    key_ = detail::absorb(key_, a);
    key_ = detail::absorb(key_, b);
    key_ = detail::absorb(key_, c);
  }

  std::uint64_t next_u64() {
    return detail::mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
  }

  // uniform in [0, 1)
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // uniform in (0, 1); safe as a log / inverse-CDF argument
  double next_open() { return ((next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * next_double();
  }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  double gaussian(double mean = 0.0, double stddev = 1.0) {
    const double r = std::sqrt(-2.0 * std::log(next_open()));
    const double t = 2.0 * std::numbers::pi * next_double();
    return mean + stddev * r * std::cos(t);
  }

  // Fills out[0..n) with independent Gaussians, consuming two uniforms per
  // Box-Muller pair.
  void fill_gaussian(std::vector<double>& out, double mean, double stddev) {
    const std::size_t n = out.size();
    for (std::size_t j = 0; j + 1 < n; j += 2) {
      const double r = std::sqrt(-2.0 * std::log(next_open()));
      const double t = 2.0 * std::numbers::pi * next_double();
      out[j] = mean + stddev * r * std::cos(t);
      out[j + 1] = mean + stddev * r * std::sin(t);
    }
    if (n % 2 != 0) {
      out[n - 1] = gaussian(mean, stddev);
    }
  }

  double laplace(double scale) { return laplace_from_uniform(next_open(), scale); }

  void fill_laplace(std::vector<double>& out, double scale) {
    for (double& v : out) {
      v = laplace(scale);
    }
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

// k distinct indices from [0, n), returned sorted ascending.
inline std::vector<int> sample_without_replacement(int n, int k, RngStream& rng) {
  if (k < 0 || k > n) {
    throw std::invalid_argument("sample_without_replacement: k out of range");
  }
  std::vector<int> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace gfl
