#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "gfl/combination.hpp"
#include "gfl/graph.hpp"
#include "gfl/privacy.hpp"
#include "gfl/rng.hpp"
#include "gfl/vec.hpp"

using gfl::ClientMaskSet;
using gfl::CombinationMatrix;
using gfl::GraphSpec;
using gfl::PrivacyScheme;
using gfl::RngStream;
using gfl::ServerPerturbationSet;

TEST_CASE("laplace sampler") {
  SUBCASE("the median uniform maps to zero") {
    CHECK(gfl::laplace_from_uniform(0.5, 3.7) == 0.0);
  }
  SUBCASE("sigma_g = 0.2 corresponds to scale 0.2/sqrt(2)") {
    const PrivacyScheme scheme = PrivacyScheme::hybrid(0.2);
    CHECK(scheme.laplace_scale() == doctest::Approx(0.14142135623730951).epsilon(1e-15));
  }
  SUBCASE("empirical variance of 1e6 samples is within 2% of 2 b^2") {
    const double scale = 0.7;
    RngStream rng(123, gfl::Stream::probe);
    const std::vector<double> samples = gfl::sample_laplace(scale, 1000000, rng);
    double mean = 0.0;
    for (double v : samples) {
      mean += v;
    }
    mean /= static_cast<double>(samples.size());
    double var = 0.0;
    for (double v : samples) {
      var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(samples.size());
    CHECK(var == doctest::Approx(2.0 * scale * scale).epsilon(0.02));
  }
  SUBCASE("Kolmogorov-Smirnov distance to the analytic CDF") {
    const double scale = 1.3;
    RngStream rng(7, gfl::Stream::probe);
    std::vector<double> samples = gfl::sample_laplace(scale, 100000, rng);
    std::sort(samples.begin(), samples.end());
    const auto cdf = [scale](double x) {
      return x < 0.0 ? 0.5 * std::exp(x / scale) : 1.0 - 0.5 * std::exp(-x / scale);
    };
    double ks = 0.0;
    const double n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const double f = cdf(samples[i]);
      ks = std::max(ks, std::abs(f - static_cast<double>(i) / n));
      ks = std::max(ks, std::abs(f - static_cast<double>(i + 1) / n));
    }
    CHECK(ks < 0.01);
  }
  SUBCASE("nonpositive scale is rejected") {
    RngStream rng(1, gfl::Stream::probe);
    CHECK_THROWS_AS(gfl::sample_laplace(0.0, 3, rng), std::invalid_argument);
  }
}

TEST_CASE("client masks from fixed pair secrets") {
  // pairs (0,1) -> 0.1, (0,2) -> -0.2, (1,2) -> 0.5
  const ClientMaskSet set = gfl::combine_pair_secrets(
      3, 1, [](int k, int l, std::vector<double>& secret) {
        if (k == 0 && l == 1) secret[0] = 0.1;
        if (k == 0 && l == 2) secret[0] = -0.2;
        if (k == 1 && l == 2) secret[0] = 0.5;
      });
  CHECK(set.masks[0][0] == doctest::Approx(-0.1).epsilon(1e-15));
  CHECK(set.masks[1][0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(set.masks[2][0] == doctest::Approx(-0.3).epsilon(1e-15));
  CHECK(set.masks[0][0] + set.masks[1][0] + set.masks[2][0] ==
        doctest::Approx(0.0).epsilon(1e-16));
}

TEST_CASE("single sampled client gets a zero mask") {
  RngStream rng(5, gfl::Stream::mask_secrets);
  const ClientMaskSet set = gfl::generate_client_masks(1, 4, 2.0, rng);
  REQUIRE(set.masks.size() == 1);
  for (double v : set.masks[0]) {
    CHECK(v == 0.0);
  }
}

TEST_CASE("masks always sum to zero") {
  RngStream pick(99, gfl::Stream::probe);
  for (int trial = 0; trial < 1000; ++trial) {
    const int count = 1 + static_cast<int>(pick.below(32));
    const int dim = 1 + static_cast<int>(pick.below(6));
    const double scale = pick.uniform(0.1, 10.0);
    RngStream rng(trial, gfl::Stream::mask_secrets);
    const ClientMaskSet set = gfl::generate_client_masks(count, dim, scale, rng);

    std::vector<double> sum(static_cast<std::size_t>(dim), 0.0);
    double max_mask = 0.0;
    for (const auto& mask : set.masks) {
      gfl::add_scaled(sum, mask, 1.0);
      max_mask = std::max(max_mask, gfl::norm(mask));
    }
    CHECK(gfl::norm(sum) <= 1e-9 * (1.0 + max_mask));
  }
}

TEST_CASE("graph-homomorphic perturbations on the two-server uniform graph") {
  CombinationMatrix A;
  A.size = 2;
  A.weights = {0.5, 0.5, 0.5, 0.5};

  ServerPerturbationSet set;
  set.base = {{0.4}, {-0.7}};
  set.self_factor = {-(1.0 - 0.5) / 0.5, -(1.0 - 0.5) / 0.5};

  CHECK(set.edge_noise(0, 1)[0] == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(set.edge_noise(0, 0)[0] == doctest::Approx(-0.4).epsilon(1e-15));
  // server 0's weighted contribution telescopes to zero
  const double contribution =
      A.at(0, 0) * set.edge_noise(0, 0)[0] + A.at(0, 1) * set.edge_noise(0, 1)[0];
  CHECK(contribution == doctest::Approx(0.0).epsilon(1e-16));
}

TEST_CASE("network perturbation sum vanishes on random graphs") {
  RngStream pick(4242, gfl::Stream::probe);
  for (int trial = 0; trial < 1000; ++trial) {
    const int nodes = 2 + static_cast<int>(pick.below(15));
    const double prob = pick.uniform(0.2, 1.0);
    const double sigma = pick.uniform(0.01, 2.0);
    const int dim = 1 + static_cast<int>(pick.below(4));
    const GraphSpec g = GraphSpec::random_connected(
        nodes, prob, static_cast<std::uint64_t>(trial));
    const CombinationMatrix A = gfl::build_combination_matrix(g);

    std::vector<RngStream> streams;
    for (int m = 0; m < nodes; ++m) {
      streams.emplace_back(static_cast<std::uint64_t>(trial),
                           gfl::Stream::server_perturbation, 1,
                           static_cast<std::uint64_t>(m));
    }
    const ServerPerturbationSet set =
        gfl::generate_server_perturbations(A, sigma, dim, streams);

    std::vector<double> total(static_cast<std::size_t>(dim), 0.0);
    double max_edge = 0.0;
    for (int p = 0; p < nodes; ++p) {
      for (int m = 0; m < nodes; ++m) {
        if (A.at(m, p) == 0.0) {
          continue;
        }
        const std::vector<double> g_mp = set.edge_noise(m, p);
        gfl::add_scaled(total, g_mp, A.at(m, p));
        max_edge = std::max(max_edge, gfl::norm(g_mp));
      }
    }
    for (double& v : total) {
      v /= static_cast<double>(nodes);
    }
    CHECK(gfl::norm(total) <= 1e-9 * (1.0 + max_edge));
  }
}

TEST_CASE("perturbations vanish as sigma goes to zero") {
  const CombinationMatrix A =
      gfl::build_combination_matrix(GraphSpec::complete(3));
  std::vector<RngStream> streams(3, RngStream(1, gfl::Stream::server_perturbation));
  const ServerPerturbationSet set =
      gfl::generate_server_perturbations(A, 0.0, 2, streams);
  for (int m = 0; m < 3; ++m) {
    for (int p = 0; p < 3; ++p) {
      for (double v : set.edge_noise(m, p)) {
        CHECK(v == 0.0);
      }
    }
  }
}

TEST_CASE("a zero self-weight is rejected") {
  CombinationMatrix A;
  A.size = 2;
  A.weights = {0.0, 1.0, 1.0, 0.0};
  std::vector<RngStream> streams(2, RngStream(1, gfl::Stream::server_perturbation));
  CHECK_THROWS_WITH_AS(gfl::generate_server_perturbations(A, 0.5, 1, streams),
                       doctest::Contains("a_mm = 0"), std::invalid_argument);
}

TEST_CASE("accountant closed forms") {
  SUBCASE("sensitivity 2 mu B i") {
    CHECK(gfl::sensitivity(0.1, 1.0, 5) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(gfl::sensitivity(0.1, 1.0, 0) == 0.0);
    CHECK(gfl::sensitivity(0.2, 1.0, 5) ==
          doctest::Approx(2.0 * gfl::sensitivity(0.1, 1.0, 5)).epsilon(1e-15));
  }
  SUBCASE("epsilon at fixed noise") {
    CHECK(gfl::epsilon_at(0.1, 1.0, 0.2, 1) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
    CHECK(gfl::epsilon_at(0.1, 1.0, 0.2, 10) ==
          doctest::Approx(55.0 * std::sqrt(2.0)).epsilon(1e-13));
    CHECK(gfl::epsilon_at(0.1, 1.0, 0.2, 0) == 0.0);
  }
  SUBCASE("noise for a target epsilon") {
    CHECK(gfl::sigma_for_epsilon(0.1, 1.0, 1.0, 1) ==
          doctest::Approx(0.2 * std::sqrt(2.0)).epsilon(1e-13));
    CHECK(gfl::sigma_for_epsilon(0.1, 1.0, 1e12, 50) ==
          doctest::Approx(0.0).epsilon(1e-9));
    CHECK_THROWS_AS(gfl::sigma_for_epsilon(0.1, 1.0, 0.0, 3),
                    std::invalid_argument);
  }
  SUBCASE("round trip at 1e-12 relative") {
    for (std::int64_t i : {1, 2, 7, 63, 1000}) {
      const double eps = 0.37 * static_cast<double>(i);
      const double sigma = gfl::sigma_for_epsilon(0.05, 2.3, eps, i);
      CHECK(gfl::epsilon_at(0.05, 2.3, sigma, i) ==
            doctest::Approx(eps).epsilon(1e-12));
    }
  }
  SUBCASE("budgets grow monotonically with time") {
    double prev_eps = -1.0;
    double prev_sigma = -1.0;
    for (std::int64_t i = 1; i <= 200; ++i) {
      const double eps = gfl::epsilon_at(0.1, 1.0, 0.2, i);
      const double sigma = gfl::sigma_for_epsilon(0.1, 1.0, 2.0, i);
      CHECK(eps > prev_eps);
      CHECK(sigma > prev_sigma);
      prev_eps = eps;
      prev_sigma = sigma;
    }
  }
  SUBCASE("budget_at bundles the pieces") {
    const gfl::PrivacyBudget b = gfl::budget_at(0.1, 1.0, 0.2, 10);
    CHECK(b.sensitivity == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(b.epsilon == doctest::Approx(55.0 * std::sqrt(2.0)).epsilon(1e-13));
  }
}

TEST_CASE("scheme parsing") {
  CHECK(PrivacyScheme::parse("none", 0.0).kind == PrivacyScheme::Kind::non_private);
  CHECK(PrivacyScheme::parse("iid", 0.3).noise_std == 0.3);
  CHECK(PrivacyScheme::parse("hybrid", 0.3).label() == "hybrid");
  CHECK_THROWS_AS(PrivacyScheme::parse("secret", 0.3), std::invalid_argument);
  CHECK_THROWS_AS(PrivacyScheme::parse("hybrid", 0.0), std::invalid_argument);
}
