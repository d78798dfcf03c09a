#pragma once

// Privatization primitives and the differential-privacy accountant.
//
// Three schemes are supported:
//   none   - no noise anywhere.
//   iid    - independent Laplace noise on every client update and every
//            server-to-server message; nothing cancels.
//   hybrid - zero-sum secret-sharing masks across each server's sampled
//            clients plus graph-homomorphic Laplace perturbations between
//            servers, so the network-wide weighted noise average is zero.

#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfl/combination.hpp"
#include "gfl/rng.hpp"
#include "gfl/vec.hpp"

namespace gfl {

struct PrivacyScheme {
  enum class Kind { non_private, iid_noise, hybrid };

  Kind kind = Kind::non_private;
  double noise_std = 0.0;  // sigma_g; Laplace scale is sigma_g / sqrt(2)

  static PrivacyScheme non_private() { return {Kind::non_private, 0.0}; }

  static PrivacyScheme iid_noise(double sigma_g) {
    require_positive(sigma_g);
    return {Kind::iid_noise, sigma_g};
  }

  static PrivacyScheme hybrid(double sigma_g) {
    require_positive(sigma_g);
    return {Kind::hybrid, sigma_g};
  }

  static PrivacyScheme parse(const std::string& name, double sigma_g) {
    if (name == "none") {
      return non_private();
    }
    if (name == "iid") {
      return iid_noise(sigma_g);
    }
    if (name == "hybrid") {
      return hybrid(sigma_g);
    }
    throw std::invalid_argument("unknown privacy scheme '" + name +
                                "' (expected none | iid | hybrid)");
  }

  std::string label() const {
    switch (kind) {
      case Kind::non_private: return "none";
      case Kind::iid_noise: return "iid";
      case Kind::hybrid: return "hybrid";
    }
    return "?";
  }

  double laplace_scale() const { return noise_std / std::sqrt(2.0); }

  bool operator==(const PrivacyScheme&) const = default;

 private:
  static void require_positive(double sigma_g) {
    if (!(sigma_g > 0.0)) {
      throw std::invalid_argument("privacy scheme: sigma_g must be > 0");
    }
  }
};

// i.i.d. Laplace(0, scale) samples via inverse CDF; mean 0, variance 2 scale^2.
inline std::vector<double> sample_laplace(double scale, int count, RngStream& rng) {
  if (!(scale > 0.0)) {
    throw std::invalid_argument("sample_laplace: scale must be > 0");
  }
  std::vector<double> out(static_cast<std::size_t>(count));
  rng.fill_laplace(out, scale);
  return out;
}

// One additive mask per sampled client of one server; the masks sum to zero.
struct ClientMaskSet {
  std::vector<std::vector<double>> masks;
};

// Core of the pairwise-secret construction: for every unordered pair (k, l)
// with k < l the generator supplies a shared vector s_kl; client k adds it,
// client l subtracts it.  Every secret appears exactly once with each sign,
// so the masks telescope to zero.
inline ClientMaskSet combine_pair_secrets(
    int sampled_count, int dim,
    const std::function<void(int, int, std::vector<double>&)>& secret_for) {
  if (sampled_count < 1) {
    throw std::invalid_argument("client masks: need at least one client");
  }
  ClientMaskSet set;
  set.masks.assign(static_cast<std::size_t>(sampled_count),
                   std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  std::vector<double> secret(static_cast<std::size_t>(dim));
  for (int k = 0; k < sampled_count; ++k) {
    for (int l = k + 1; l < sampled_count; ++l) {
      secret_for(k, l, secret);
      add_scaled(set.masks[static_cast<std::size_t>(k)], secret, 1.0);
      add_scaled(set.masks[static_cast<std::size_t>(l)], secret, -1.0);
    }
  }
  return set;
}

// Fresh zero-sum masks; pair secrets are Gaussian with the given scale.
inline ClientMaskSet generate_client_masks(int sampled_count, int dim,
                                           double magnitude_scale,
                                           RngStream& rng) {
  return combine_pair_secrets(
      sampled_count, dim, [&](int, int, std::vector<double>& secret) {
        rng.fill_gaussian(secret, 0.0, magnitude_scale);
      });
}

// Graph-homomorphic server perturbations.  Server m draws one base vector
// g_m ~ Lap(0, sigma_g/sqrt(2)) per component and sends g_m on every edge;
// its own combination term uses -((1 - a_mm)/a_mm) g_m, so each server's
// weighted contribution telescopes to zero and the network average of the
// combined noise vanishes.
struct ServerPerturbationSet {
  std::vector<std::vector<double>> base;  // g_m per server
  std::vector<double> self_factor;        // -(1 - a_mm)/a_mm per server

  int servers() const { return static_cast<int>(base.size()); }
  int dim() const { return base.empty() ? 0 : static_cast<int>(base.front().size()); }

  // Noise added by server m to the update combined at server p.
  std::vector<double> edge_noise(int m, int p) const {
    std::vector<double> g = base[static_cast<std::size_t>(m)];
    if (m == p) {
      for (double& v : g) {
        v *= self_factor[static_cast<std::size_t>(m)];
      }
    }
    return g;
  }
};

// streams[m] supplies server m's base draw; one stream per server keeps
// generation order irrelevant.
inline ServerPerturbationSet generate_server_perturbations(
    const CombinationMatrix& A, double sigma_g, int dim,
    std::vector<RngStream>& streams) {
  if (sigma_g < 0.0) {
    throw std::invalid_argument("server perturbations: sigma_g must be >= 0");
  }
  if (static_cast<int>(streams.size()) != A.size) {
    throw std::invalid_argument("server perturbations: need one stream per server");
  }
  ServerPerturbationSet set;
  set.base.assign(static_cast<std::size_t>(A.size),
                  std::vector<double>(static_cast<std::size_t>(dim), 0.0));
  set.self_factor.assign(static_cast<std::size_t>(A.size), 0.0);
  const double scale = sigma_g / std::sqrt(2.0);
  for (int m = 0; m < A.size; ++m) {
    const double diag = A.at(m, m);
    if (!(diag > 0.0)) {
      throw std::invalid_argument(
          "server perturbations: a_mm = 0 at server " + std::to_string(m) +
          "; the construction divides by the self-weight");
    }
    set.self_factor[static_cast<std::size_t>(m)] = -(1.0 - diag) / diag;
    if (sigma_g > 0.0) {
      streams[static_cast<std::size_t>(m)].fill_laplace(
          set.base[static_cast<std::size_t>(m)], scale);
    }
  }
  return set;
}

// --- accountant -----------------------------------------------------------
//
// After i rounds, replacing one client's data can move any shared client
// update by at most Delta(i) = 2 mu B i.  Under the hybrid scheme the run is
// eps(i)-differentially private with eps(i) = sqrt(2) mu B (1+i) i / sigma_g,
// so privacy degrades quadratically with time for a fixed noise level.

inline double sensitivity(double step_size, double gradient_bound,
                          std::int64_t iteration) {
  if (!(step_size > 0.0) || !(gradient_bound > 0.0) || iteration < 0) {
    throw std::invalid_argument("sensitivity: need mu > 0, B > 0, i >= 0");
  }
  return 2.0 * step_size * gradient_bound * static_cast<double>(iteration);
}

inline double epsilon_at(double step_size, double gradient_bound, double sigma_g,
                         std::int64_t iteration) {
  if (!(sigma_g > 0.0)) {
    throw std::invalid_argument("epsilon_at: sigma_g must be > 0");
  }
  const double i = static_cast<double>(iteration);
  return std::sqrt(2.0) * step_size * gradient_bound * (1.0 + i) * i / sigma_g;
}

inline double sigma_for_epsilon(double step_size, double gradient_bound,
                                double epsilon_target, std::int64_t iteration) {
  if (!(epsilon_target > 0.0)) {
    throw std::invalid_argument(
        "sigma_for_epsilon: epsilon must be > 0 (zero would need infinite noise)");
  }
  if (iteration < 1) {
    throw std::invalid_argument("sigma_for_epsilon: iteration must be >= 1");
  }
  const double i = static_cast<double>(iteration);
  return std::sqrt(2.0) * step_size * gradient_bound * (1.0 + i) * i /
         epsilon_target;
}

struct PrivacyBudget {
  double step_size = 0.0;
  double gradient_bound = 0.0;
  double noise_std = 0.0;
  std::int64_t iteration = 0;
  double sensitivity = 0.0;
  double epsilon = 0.0;
};

inline PrivacyBudget budget_at(double step_size, double gradient_bound,
                               double sigma_g, std::int64_t iteration) {
  PrivacyBudget b;
  b.step_size = step_size;
  b.gradient_bound = gradient_bound;
  b.noise_std = sigma_g;
  b.iteration = iteration;
  b.sensitivity = sensitivity(step_size, gradient_bound, iteration);
  b.epsilon = epsilon_at(step_size, gradient_bound, sigma_g, iteration);
  return b;
}

}  // namespace gfl
