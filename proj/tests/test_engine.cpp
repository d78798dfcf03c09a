#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "gfl/combination.hpp"
#include "gfl/dataset.hpp"
#include "gfl/engine.hpp"
#include "gfl/graph.hpp"
#include "gfl/logistic.hpp"
#include "gfl/metrics.hpp"
#include "gfl/privacy.hpp"
#include "gfl/vec.hpp"

using gfl::ClientDataset;
using gfl::CombinationMatrix;
using gfl::DataPoint;
using gfl::DatasetParams;
using gfl::EngineConfig;
using gfl::FederatedDataset;
using gfl::GraphSpec;
using gfl::NetworkState;
using gfl::PrivacyScheme;
using gfl::RoundTrace;

namespace {

FederatedDataset small_dataset(std::uint64_t seed = 7, int servers = 4,
                               int clients = 6, int points = 12, int dim = 2) {
  DatasetParams params;
  params.servers = servers;
  params.clients = clients;
  params.points_per_client = points;
  params.dim = dim;
  params.seed = seed;
  return gfl::generate_synthetic(params);
}

gfl::GlobalOptimum zero_reference(int dim) {
  gfl::GlobalOptimum opt;
  opt.model.assign(static_cast<std::size_t>(dim), 0.0);
  opt.converged = true;
  return opt;
}

}  // namespace

TEST_CASE("client update") {
  ClientDataset c;
  c.points = {DataPoint{{1.0, 0.0}, 1.0}, DataPoint{{0.0, 2.0}, -1.0}};

  SUBCASE("single point from the zero model") {
    const auto w = gfl::client_update({0.0, 0.0}, c, {0}, 0.1, 0.0);
    CHECK(w[0] == doctest::Approx(0.05).epsilon(1e-16));
    CHECK(w[1] == 0.0);
  }
  SUBCASE("zero step size returns the model unchanged") {
    const auto w = gfl::client_update({0.3, -0.4}, c, {0, 1}, 0.0, 0.1);
    CHECK(w == std::vector<double>{0.3, -0.4});
  }
  SUBCASE("a batch step is the mean of per-sample gradients") {
    const std::vector<double> w0 = {0.2, -0.1};
    const double mu = 0.07;
    const double reg = 0.03;
    const auto updated = gfl::client_update(w0, c, {0, 1}, mu, reg);

    const auto g0 = gfl::loss_gradient(w0, c.points[0], reg);
    const auto g1 = gfl::loss_gradient(w0, c.points[1], reg);
    for (int j = 0; j < 2; ++j) {
      const double expected = w0[j] - mu * 0.5 * (g0[j] + g1[j]);
      CHECK(updated[j] == doctest::Approx(expected).epsilon(1e-15));
    }
  }
  SUBCASE("empty batches are rejected") {
    CHECK_THROWS_AS(gfl::client_update({0.0, 0.0}, c, {}, 0.1, 0.0),
                    std::invalid_argument);
  }
}

TEST_CASE("server aggregate") {
  const std::vector<std::vector<double>> models = {{1.0, 2.0}, {3.0, 4.0}};

  SUBCASE("plain average") {
    CHECK(gfl::server_aggregate(models) == std::vector<double>{2.0, 3.0});
  }
  SUBCASE("zero-sum masks cancel") {
    gfl::ClientMaskSet masks;
    masks.masks = {{0.9, -1.4}, {-0.9, 1.4}};
    const auto agg = gfl::server_aggregate(models, masks);
    CHECK(agg[0] == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(agg[1] == doctest::Approx(3.0).epsilon(1e-15));
  }
  SUBCASE("iid noise shifts the average by the noise mean") {
    const std::vector<std::vector<double>> noise = {{0.5, 0.0}, {1.5, 0.0}};
    const auto agg = gfl::server_aggregate(models, &noise);
    CHECK(agg[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(agg[1] == doctest::Approx(3.0).epsilon(1e-15));
  }
  SUBCASE("count mismatch is rejected") {
    const std::vector<std::vector<double>> noise = {{0.0, 0.0}};
    CHECK_THROWS_AS(gfl::server_aggregate(models, &noise), std::invalid_argument);
  }
}

TEST_CASE("server combine") {
  SUBCASE("a single isolated node keeps its aggregate and hybrid noise dies") {
    const CombinationMatrix A = gfl::build_combination_matrix(GraphSpec::complete(1));
    std::vector<gfl::RngStream> streams(
        1, gfl::RngStream(3, gfl::Stream::server_perturbation));
    const auto pert = gfl::generate_server_perturbations(A, 5.0, 2, streams);
    CHECK(pert.self_factor[0] == 0.0);
    const auto mixed = gfl::server_combine(A, {{1.5, -2.0}}, pert);
    CHECK(mixed[0][0] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(mixed[0][1] == doctest::Approx(-2.0).epsilon(1e-15));
  }
  SUBCASE("uniform weights with equal aggregates reproduce the aggregate") {
    const CombinationMatrix A = gfl::build_combination_matrix(GraphSpec::complete(5));
    const std::vector<std::vector<double>> aggregates(5, {0.7, -0.3});
    for (const auto& w : gfl::server_combine(A, aggregates)) {
      CHECK(w[0] == doctest::Approx(0.7).epsilon(1e-14));
      CHECK(w[1] == doctest::Approx(-0.3).epsilon(1e-14));
    }
  }
  SUBCASE("two-server hybrid noise keeps the centroid") {
    CombinationMatrix A;
    A.size = 2;
    A.weights = {0.5, 0.5, 0.5, 0.5};
    gfl::ServerPerturbationSet pert;
    pert.base = {{0.4}, {-0.9}};
    pert.self_factor = {-1.0, -1.0};

    const std::vector<std::vector<double>> aggregates = {{1.0}, {3.0}};
    const auto noiseless = gfl::server_combine(A, aggregates);
    const auto noisy = gfl::server_combine(A, aggregates, pert);
    const double centroid_noiseless = 0.5 * (noiseless[0][0] + noiseless[1][0]);
    const double centroid_noisy = 0.5 * (noisy[0][0] + noisy[1][0]);
    CHECK(centroid_noisy == doctest::Approx(centroid_noiseless).epsilon(1e-14));
    CHECK(std::abs(noisy[0][0] - noiseless[0][0]) > 0.05);
  }
}

TEST_CASE("a non-private full-participation full-batch round is one synchronous step") {
  DatasetParams params;
  params.servers = 3;
  params.clients = 4;
  params.points_per_client = 10;
  params.dim = 2;
  params.seed = 11;
  const FederatedDataset data = gfl::generate_synthetic(params);
  const CombinationMatrix A =
      gfl::build_combination_matrix(GraphSpec::ring(3));

  EngineConfig config;
  config.step_size = 0.2;
  config.sampled_clients = 0;  // everyone
  config.batch_size = 10;      // full batches
  config.regularization = 0.05;
  config.scheme = PrivacyScheme::non_private();

  NetworkState state = gfl::initial_state(data, config);
  gfl::run_round(state, data, A, config);

  // expected: every server averages its clients' one-step updates, then mixes
  std::vector<std::vector<double>> expected_aggregates;
  const std::vector<double> w0 = {0.0, 0.0};
  for (int p = 0; p < 3; ++p) {
    std::vector<std::vector<double>> updates;
    for (int k = 0; k < 4; ++k) {
      std::vector<int> batch(10);
      std::iota(batch.begin(), batch.end(), 0);
      updates.push_back(gfl::client_update(w0, data.client(p, k), batch,
                                           config.step_size,
                                           config.regularization));
    }
    expected_aggregates.push_back(gfl::server_aggregate(updates));
  }
  const auto expected = gfl::server_combine(A, expected_aggregates);
  for (int p = 0; p < 3; ++p) {
    CHECK(gfl::distance(state.models[static_cast<std::size_t>(p)],
                        expected[static_cast<std::size_t>(p)]) < 1e-14);
  }
}

TEST_CASE("zero step size and no noise leaves the state unchanged") {
  const FederatedDataset data = small_dataset();
  const CombinationMatrix A = gfl::build_combination_matrix(
      GraphSpec::random_connected(4, 0.6, 2));
  EngineConfig config;
  config.step_size = 0.0;
  config.batch_size = 3;
  config.scheme = PrivacyScheme::non_private();

  NetworkState state = gfl::initial_state(data, config);
  gfl::run_round(state, data, A, config);
  for (const auto& w : state.models) {
    CHECK(w == std::vector<double>{0.0, 0.0});
  }
}

TEST_CASE("sampling is identical across schemes for a fixed seed") {
  const FederatedDataset data = small_dataset(21);
  const CombinationMatrix A = gfl::build_combination_matrix(
      GraphSpec::random_connected(4, 0.5, 5));

  EngineConfig base;
  base.step_size = 0.1;
  base.sampled_clients = 3;
  base.batch_size = 4;
  base.seed = 77;

  std::vector<RoundTrace> traces;
  for (const char* name : {"none", "iid", "hybrid"}) {
    EngineConfig config = base;
    config.scheme = PrivacyScheme::parse(name, 0.4);
    NetworkState state = gfl::initial_state(data, config);
    gfl::run_round(state, data, A, config);
    RoundTrace t = gfl::run_round(state, data, A, config);
    traces.push_back(std::move(t));
  }
  CHECK(traces[0].sampled_clients == traces[1].sampled_clients);
  CHECK(traces[0].sampled_clients == traces[2].sampled_clients);
  CHECK(traces[0].batches == traces[1].batches);
  CHECK(traces[0].batches == traces[2].batches);
}

TEST_CASE("one-round centroid equivalence of hybrid and non-private") {
  const FederatedDataset data = small_dataset(33, 5, 8, 16, 3);
  const CombinationMatrix A = gfl::build_combination_matrix(
      GraphSpec::random_connected(5, 0.5, 9));
  const double sigma = 0.3;

  EngineConfig plain;
  plain.step_size = 0.1;
  plain.sampled_clients = 5;
  plain.batch_size = 4;
  plain.seed = 1234;
  plain.scheme = PrivacyScheme::non_private();

  EngineConfig hybrid = plain;
  hybrid.scheme = PrivacyScheme::hybrid(sigma);

  NetworkState state_plain = gfl::initial_state(data, plain);
  NetworkState state_hybrid = gfl::initial_state(data, hybrid);
  gfl::run_round(state_plain, data, A, plain);
  gfl::run_round(state_hybrid, data, A, hybrid);

  const auto centroid_plain = gfl::network_centroid(state_plain.models);
  const auto centroid_hybrid = gfl::network_centroid(state_hybrid.models);
  CHECK(gfl::distance(centroid_plain, centroid_hybrid) <=
        1e-10 * gfl::norm(centroid_plain));

  double max_gap = 0.0;
  for (std::size_t p = 0; p < state_plain.models.size(); ++p) {
    max_gap = std::max(max_gap, gfl::distance(state_plain.models[p],
                                              state_hybrid.models[p]));
  }
  CHECK(max_gap > 0.1 * sigma);
}

TEST_CASE("hybrid aggregates equal the unmasked averages every round") {
  const FederatedDataset data = small_dataset(44);
  const CombinationMatrix A = gfl::build_combination_matrix(
      GraphSpec::random_connected(4, 0.7, 3));
  EngineConfig config;
  config.step_size = 0.1;
  config.sampled_clients = 4;
  config.batch_size = 3;
  config.seed = 5;
  config.scheme = PrivacyScheme::hybrid(0.5);
  config.mask_scale = 2.0;

  NetworkState state = gfl::initial_state(data, config);
  for (int round = 0; round < 10; ++round) {
    const RoundTrace trace = gfl::run_round(state, data, A, config);
    for (std::size_t p = 0; p < trace.aggregates.size(); ++p) {
      const auto unmasked = gfl::server_aggregate(trace.client_models[p]);
      const double scale = std::max(1.0, gfl::norm(unmasked));
      CHECK(gfl::distance(trace.aggregates[p], unmasked) <= 1e-9 * scale);
    }
  }
}

TEST_CASE("monotone initial descent under full participation") {
  DatasetParams params;
  params.servers = 3;
  params.clients = 5;
  params.points_per_client = 20;
  params.dim = 2;
  params.seed = 55;
  const FederatedDataset data = gfl::generate_synthetic(params);
  const CombinationMatrix A = gfl::build_combination_matrix(GraphSpec::complete(3));
  const double reg = 0.01;
  const auto constants = gfl::estimate_theory_constants(data, reg, {{0.0, 0.0}});

  EngineConfig config;
  config.step_size = 1.0 / constants.smoothness;
  config.sampled_clients = 0;
  config.batch_size = 20;
  config.regularization = reg;
  config.scheme = PrivacyScheme::non_private();

  NetworkState state = gfl::initial_state(data, config);
  double previous = gfl::global_objective(data, gfl::network_centroid(state.models), reg);
  for (int round = 0; round < 20; ++round) {
    gfl::run_round(state, data, A, config);
    const double now =
        gfl::global_objective(data, gfl::network_centroid(state.models), reg);
    CHECK(now <= previous + 1e-14);
    previous = now;
  }
}

TEST_CASE("permutation equivariance with logical stream ids") {
  const int servers = 4;
  const FederatedDataset data = small_dataset(66, servers, 5, 8, 2);
  const GraphSpec graph = GraphSpec::random_connected(servers, 0.6, 13);
  const CombinationMatrix A = gfl::build_combination_matrix(graph);

  // permutation pi: new index -> old index
  const std::vector<int> to_old = {2, 0, 3, 1};

  // permuted dataset: new server q holds old server to_old[q]'s clients
  std::vector<ClientDataset> grid;
  for (int q = 0; q < servers; ++q) {
    for (int k = 0; k < 5; ++k) {
      grid.push_back(data.client(to_old[static_cast<std::size_t>(q)], k));
    }
  }
  const FederatedDataset permuted_data(servers, 5, 2, 0, std::move(grid));

  CombinationMatrix permuted_A;
  permuted_A.size = servers;
  permuted_A.weights.assign(16, 0.0);
  for (int q = 0; q < servers; ++q) {
    for (int r = 0; r < servers; ++r) {
      permuted_A.at(q, r) = A.at(to_old[static_cast<std::size_t>(q)],
                                 to_old[static_cast<std::size_t>(r)]);
    }
  }
  permuted_A.lambda = A.lambda;

  for (const char* scheme : {"hybrid", "iid", "none"}) {
    EngineConfig config;
    config.step_size = 0.15;
    config.sampled_clients = 3;
    config.batch_size = 2;
    config.seed = 99;
    config.scheme = PrivacyScheme::parse(scheme, 0.25);

    EngineConfig permuted_config = config;
    permuted_config.server_stream_ids = to_old;  // same seeds per logical server

    NetworkState state = gfl::initial_state(data, config);
    NetworkState permuted_state = gfl::initial_state(permuted_data, permuted_config);
    for (int round = 0; round < 5; ++round) {
      gfl::run_round(state, data, A, config);
      gfl::run_round(permuted_state, permuted_data, permuted_A, permuted_config);
      for (int q = 0; q < servers; ++q) {
        const auto& original = state.models[static_cast<std::size_t>(
            to_old[static_cast<std::size_t>(q)])];
        const auto& mirrored = permuted_state.models[static_cast<std::size_t>(q)];
        CHECK(gfl::distance(original, mirrored) <=
              1e-12 * (1.0 + gfl::norm(original)));
      }
    }
  }
}

TEST_CASE("divergence is detected, named, and flagged") {
  const FederatedDataset data = small_dataset(77);
  const CombinationMatrix A = gfl::build_combination_matrix(
      GraphSpec::random_connected(4, 0.6, 1));

  EngineConfig config;
  config.step_size = 0.1;
  config.batch_size = 2;
  config.iterations = 50;
  config.scheme = PrivacyScheme::iid_noise(1e15);  // noise certain to trip the limit

  SUBCASE("run_round throws with server and iteration") {
    NetworkState state = gfl::initial_state(data, config);
    CHECK_THROWS_AS(gfl::run_round(state, data, A, config), gfl::DivergenceError);
  }
  SUBCASE("run_experiment records the event and truncates") {
    const gfl::Trajectory t =
        gfl::run_experiment(data, A, config, zero_reference(2));
    CHECK(t.diverged);
    CHECK(t.diverged_iteration >= 1);
    CHECK(t.diverged_server >= 0);
    CHECK(t.rows.size() < 51);
  }
}

TEST_CASE("run_experiment emits an initial row and is deterministic") {
  const FederatedDataset data = small_dataset(88);
  const CombinationMatrix A = gfl::build_combination_matrix(
      GraphSpec::random_connected(4, 0.5, 8));
  const gfl::GlobalOptimum opt = gfl::compute_global_optimum(data, 0.01);

  EngineConfig config;
  config.step_size = 0.1;
  config.batch_size = 3;
  config.scheme = PrivacyScheme::hybrid(0.2);
  config.seed = 3141;

  SUBCASE("zero iterations produce exactly the initial row") {
    config.iterations = 0;
    const gfl::Trajectory t = gfl::run_experiment(data, A, config, opt);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0].iteration == 0);
    CHECK(t.rows[0].disagreement == 0.0);
    CHECK(t.rows[0].mse ==
          doctest::Approx(gfl::squared_norm(opt.model)).epsilon(1e-14));
  }
  SUBCASE("equal seeds give bit-identical trajectories") {
    config.iterations = 25;
    const gfl::Trajectory a = gfl::run_experiment(data, A, config, opt, 4);
    const gfl::Trajectory b = gfl::run_experiment(data, A, config, opt, 4);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      CHECK(a.rows[i].mse == b.rows[i].mse);
      CHECK(a.rows[i].disagreement == b.rows[i].disagreement);
      CHECK(a.rows[i].centroid == b.rows[i].centroid);
    }
  }
}

TEST_CASE("engine config validation") {
  const FederatedDataset data = small_dataset();
  EngineConfig config;

  config.sampled_clients = 7;  // K is 6
  CHECK_THROWS_AS(gfl::validate_engine_config(config, data), std::invalid_argument);

  config.sampled_clients = 0;
  config.batch_size = 13;  // N is 12
  CHECK_THROWS_AS(gfl::validate_engine_config(config, data), std::invalid_argument);

  config.batch_size = 12;
  CHECK_NOTHROW(gfl::validate_engine_config(config, data));
}
