#pragma once

// The learning rounds.  Each round runs three steps on every server:
//
//   1. client update: each sampled client takes one mini-batch SGD step
//      from its server's current model;
//   2. server aggregation: the server averages the (possibly masked)
//      client updates;
//   3. server combination: servers mix their (possibly perturbed)
//      aggregates with their graph neighbours' through the combination
//      matrix.
//
// Randomness is drawn from streams keyed by (seed, purpose, iteration,
// server, client).  Client and batch sampling use their own purposes, so two
// runs that differ only in the privacy scheme sample identical clients and
// batches; privatization noise lives on separate streams.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gfl/combination.hpp"
#include "gfl/dataset.hpp"
#include "gfl/logistic.hpp"
#include "gfl/metrics.hpp"
#include "gfl/privacy.hpp"
#include "gfl/rng.hpp"
#include "gfl/vec.hpp"

namespace gfl {

struct EngineConfig {
  double step_size = 0.1;
  int sampled_clients = 0;  // L; 0 means every client participates
  int batch_size = 1;
  std::int64_t iterations = 2000;
  PrivacyScheme scheme;  // non-private by default
  double regularization = 0.01;
  std::uint64_t seed = 1;
  double mask_scale = 0.5;                // pair-secret std for hybrid masks
  std::vector<double> initial_model;      // empty = zero vector
  std::vector<int> server_stream_ids;     // empty = identity; logical RNG ids
  double divergence_limit = 1e12;

  bool operator==(const EngineConfig&) const = default;
};

struct NetworkState {
  std::int64_t iteration = 0;
  std::vector<std::vector<double>> models;  // per server
  std::vector<double> initial_model;
};

struct RoundTrace {
  // per server: the L sampled client ids, ascending
  std::vector<std::vector<int>> sampled_clients;
  // per server, per sampled client: the mini-batch indices, ascending
  std::vector<std::vector<std::vector<int>>> batches;
  // per server, per sampled client: the client's updated model
  std::vector<std::vector<std::vector<double>>> client_models;
  // per server: the aggregate before combination
  std::vector<std::vector<double>> aggregates;
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int server, std::int64_t iteration)
      : std::runtime_error("model diverged at server " + std::to_string(server) +
                           ", iteration " + std::to_string(iteration)),
        server_(server), iteration_(iteration) {}

  int server() const { return server_; }
  std::int64_t iteration() const { return iteration_; }

 private:
  int server_;
  std::int64_t iteration_;
};

inline void validate_engine_config(const EngineConfig& config,
                                   const FederatedDataset& data) {
  if (!(config.step_size >= 0.0)) {
    throw std::invalid_argument("engine config: step_size must be >= 0");
  }
  const int clients = data.clients_per_server();
  if (config.sampled_clients < 0 || config.sampled_clients > clients) {
    throw std::invalid_argument(
        "engine config: sampled_clients L = " +
        std::to_string(config.sampled_clients) + " violates 1 <= L <= K = " +
        std::to_string(clients));
  }
  if (config.batch_size < 1) {
    throw std::invalid_argument("engine config: batch_size must be >= 1");
  }
  for (int p = 0; p < data.servers(); ++p) {
    for (int k = 0; k < clients; ++k) {
      if (config.batch_size > data.client(p, k).size()) {
        throw std::invalid_argument(
            "engine config: batch_size exceeds the dataset of client (" +
            std::to_string(p) + "," + std::to_string(k) + ")");
      }
    }
  }
  if (config.iterations < 0) {
    throw std::invalid_argument("engine config: iterations must be >= 0");
  }
  if (!config.initial_model.empty() &&
      config.initial_model.size() != static_cast<std::size_t>(data.dim())) {
    throw std::invalid_argument("engine config: initial model dimension mismatch");
  }
  if (!config.server_stream_ids.empty() &&
      config.server_stream_ids.size() != static_cast<std::size_t>(data.servers())) {
    throw std::invalid_argument("engine config: server_stream_ids size mismatch");
  }
}

// One mini-batch SGD step from the server's model.
inline std::vector<double> client_update(const std::vector<double>& server_model,
                                         const ClientDataset& data,
                                         const std::vector<int>& batch,
                                         double step_size, double reg) {
  if (batch.empty()) {
    throw std::invalid_argument("client_update: empty mini-batch");
  }
  std::vector<double> grad(server_model.size(), 0.0);
  for (int b : batch) {
    add_loss_gradient(server_model, data.points[static_cast<std::size_t>(b)], reg,
                      grad);
  }
  std::vector<double> updated = server_model;
  add_scaled(updated, grad, -step_size / static_cast<double>(batch.size()));
  return updated;
}

// Average of client models plus an optional additive vector per client
// (zero-sum masks under hybrid, i.i.d. noise under iid).
inline std::vector<double> server_aggregate(
    const std::vector<std::vector<double>>& client_models,
    const std::vector<std::vector<double>>* additive = nullptr) {
  if (client_models.empty()) {
    throw std::invalid_argument("server_aggregate: no client models");
  }
  if (additive != nullptr && additive->size() != client_models.size()) {
    throw std::invalid_argument(
        "server_aggregate: client/mask count mismatch");
  }
  std::vector<double> sum(client_models.front().size(), 0.0);
  for (std::size_t k = 0; k < client_models.size(); ++k) {
    add_scaled(sum, client_models[k], 1.0);
    if (additive != nullptr) {
      add_scaled(sum, (*additive)[k], 1.0);
    }
  }
  const double inv = 1.0 / static_cast<double>(client_models.size());
  for (double& v : sum) {
    v *= inv;
  }
  return sum;
}

inline std::vector<double> server_aggregate(
    const std::vector<std::vector<double>>& client_models,
    const ClientMaskSet& masks) {
  return server_aggregate(client_models, &masks.masks);
}

// Edge noise table: noise[m][p] is added by server m to the update combined
// at server p; empty vectors mean no noise on that edge.
using EdgeNoiseTable = std::vector<std::vector<std::vector<double>>>;

inline std::vector<std::vector<double>> server_combine(
    const CombinationMatrix& A,
    const std::vector<std::vector<double>>& aggregates,
    const EdgeNoiseTable* edge_noise = nullptr) {
  if (static_cast<int>(aggregates.size()) != A.size) {
    throw std::invalid_argument("server_combine: aggregate count mismatch");
  }
  const std::size_t dim = aggregates.front().size();
  std::vector<std::vector<double>> mixed(
      aggregates.size(), std::vector<double>(dim, 0.0));
  for (int p = 0; p < A.size; ++p) {
    auto& out = mixed[static_cast<std::size_t>(p)];
    for (int m = 0; m < A.size; ++m) {
      const double weight = A.at(m, p);
      if (weight == 0.0) {
        continue;
      }
      add_scaled(out, aggregates[static_cast<std::size_t>(m)], weight);
      if (edge_noise != nullptr) {
        const auto& g = (*edge_noise)[static_cast<std::size_t>(m)]
                                     [static_cast<std::size_t>(p)];
        if (!g.empty()) {
          add_scaled(out, g, weight);
        }
      }
    }
  }
  return mixed;
}

inline std::vector<std::vector<double>> server_combine(
    const CombinationMatrix& A,
    const std::vector<std::vector<double>>& aggregates,
    const ServerPerturbationSet& perturbations) {
  EdgeNoiseTable table(
      static_cast<std::size_t>(A.size),
      std::vector<std::vector<double>>(static_cast<std::size_t>(A.size)));
  for (int m = 0; m < A.size; ++m) {
    for (int p = 0; p < A.size; ++p) {
      if (A.at(m, p) != 0.0) {
        table[static_cast<std::size_t>(m)][static_cast<std::size_t>(p)] =
            perturbations.edge_noise(m, p);
      }
    }
  }
  return server_combine(A, aggregates, &table);
}

namespace detail {

inline int stream_id(const EngineConfig& config, int server) {
  return config.server_stream_ids.empty()
             ? server
             : config.server_stream_ids[static_cast<std::size_t>(server)];
}

}  // namespace detail

// Advances the state by one round and reports what happened.  Throws
// DivergenceError when any model component leaves [-limit, limit] or stops
// being finite.
inline RoundTrace run_round(NetworkState& state, const FederatedDataset& data,
                            const CombinationMatrix& A,
                            const EngineConfig& config) {
  const int servers = data.servers();
  const int clients = data.clients_per_server();
  const int dim = data.dim();
  const int sampled =
      config.sampled_clients == 0 ? clients : config.sampled_clients;
  const std::int64_t round = state.iteration + 1;
  const auto r = static_cast<std::uint64_t>(round);

  RoundTrace trace;
  trace.sampled_clients.resize(static_cast<std::size_t>(servers));
  trace.batches.resize(static_cast<std::size_t>(servers));
  trace.client_models.resize(static_cast<std::size_t>(servers));
  trace.aggregates.resize(static_cast<std::size_t>(servers));

  const bool hybrid = config.scheme.kind == PrivacyScheme::Kind::hybrid;
  const bool iid = config.scheme.kind == PrivacyScheme::Kind::iid_noise;
  const double laplace_scale = config.scheme.laplace_scale();

  for (int p = 0; p < servers; ++p) {
    const auto sid = static_cast<std::uint64_t>(detail::stream_id(config, p));
    RngStream sampling(config.seed, Stream::client_sampling, r, sid);
    std::vector<int> chosen = sample_without_replacement(clients, sampled, sampling);

    std::vector<std::vector<double>> updates;
    std::vector<std::vector<int>> batches;
    updates.reserve(chosen.size());
    batches.reserve(chosen.size());
    for (int k : chosen) {
      const ClientDataset& client = data.client(p, k);
      RngStream batch_rng(config.seed, Stream::batch_sampling, r, sid,
                          static_cast<std::uint64_t>(k));
      std::vector<int> batch = sample_without_replacement(
          client.size(), config.batch_size, batch_rng);
      updates.push_back(client_update(state.models[static_cast<std::size_t>(p)],
                                      client, batch, config.step_size,
                                      config.regularization));
      batches.push_back(std::move(batch));
    }

    std::vector<double> aggregate;
    if (hybrid) {
      RngStream mask_rng(config.seed, Stream::mask_secrets, r, sid);
      const ClientMaskSet masks = generate_client_masks(
          static_cast<int>(chosen.size()), dim, config.mask_scale, mask_rng);
      aggregate = server_aggregate(updates, masks);
    } else if (iid) {
      std::vector<std::vector<double>> noise(chosen.size());
      for (std::size_t j = 0; j < chosen.size(); ++j) {
        RngStream noise_rng(config.seed, Stream::iid_client_noise, r, sid,
                            static_cast<std::uint64_t>(chosen[j]));
        noise[j] = sample_laplace(laplace_scale, dim, noise_rng);
      }
      aggregate = server_aggregate(updates, &noise);
    } else {
      aggregate = server_aggregate(updates);
    }

    trace.sampled_clients[static_cast<std::size_t>(p)] = std::move(chosen);
    trace.batches[static_cast<std::size_t>(p)] = std::move(batches);
    trace.client_models[static_cast<std::size_t>(p)] = std::move(updates);
    trace.aggregates[static_cast<std::size_t>(p)] = std::move(aggregate);
  }

  if (hybrid) {
    std::vector<RngStream> streams;
    streams.reserve(static_cast<std::size_t>(servers));
    for (int m = 0; m < servers; ++m) {
      streams.emplace_back(config.seed, Stream::server_perturbation, r,
                           static_cast<std::uint64_t>(detail::stream_id(config, m)));
    }
    const ServerPerturbationSet perturbations = generate_server_perturbations(
        A, config.scheme.noise_std, dim, streams);
    state.models = server_combine(A, trace.aggregates, perturbations);
  } else if (iid) {
    EdgeNoiseTable table(
        static_cast<std::size_t>(servers),
        std::vector<std::vector<double>>(static_cast<std::size_t>(servers)));
    for (int m = 0; m < servers; ++m) {
      const auto sid = static_cast<std::uint64_t>(detail::stream_id(config, m));
      for (int p = 0; p < servers; ++p) {
        if (A.at(m, p) != 0.0) {
          RngStream noise_rng(config.seed, Stream::iid_server_noise, r, sid,
                              static_cast<std::uint64_t>(
                                  detail::stream_id(config, p)));
          table[static_cast<std::size_t>(m)][static_cast<std::size_t>(p)] =
              sample_laplace(laplace_scale, dim, noise_rng);
        }
      }
    }
    state.models = server_combine(A, trace.aggregates, &table);
  } else {
    state.models = server_combine(A, trace.aggregates);
  }

  for (int p = 0; p < servers; ++p) {
    for (double v : state.models[static_cast<std::size_t>(p)]) {
      if (!std::isfinite(v) || std::abs(v) > config.divergence_limit) {
        throw DivergenceError(p, round);
      }
    }
  }
  state.iteration = round;
  return trace;
}

struct Trajectory {
  std::vector<MetricsRow> rows;
  bool diverged = false;
  int diverged_server = -1;
  std::int64_t diverged_iteration = -1;

  std::vector<double> mse_series() const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const MetricsRow& row : rows) {
      out.push_back(row.mse);
    }
    return out;
  }
};

inline NetworkState initial_state(const FederatedDataset& data,
                                  const EngineConfig& config) {
  NetworkState state;
  state.initial_model = config.initial_model.empty()
                            ? std::vector<double>(
                                  static_cast<std::size_t>(data.dim()), 0.0)
                            : config.initial_model;
  state.models.assign(static_cast<std::size_t>(data.servers()),
                      state.initial_model);
  return state;
}

// Runs `iterations` rounds from the shared initial model and emits one
// metrics row per iteration (including iteration 0).  A divergence truncates
// the trajectory and is flagged rather than propagated.
inline Trajectory run_experiment(const FederatedDataset& data,
                                 const CombinationMatrix& A,
                                 const EngineConfig& config,
                                 const GlobalOptimum& optimum, int run_id = 0) {
  validate_engine_config(config, data);
  NetworkState state = initial_state(data, config);

  Trajectory trajectory;
  const std::string label = config.scheme.label();
  const auto emit = [&]() {
    MetricsRow row;
    row.iteration = state.iteration;
    row.centroid = network_centroid(state.models);
    row.mse = squared_distance(optimum.model, row.centroid);
    row.msd_db = to_db(row.mse);
    row.disagreement = network_disagreement(state.models);
    row.scheme = label;
    row.run = run_id;
    trajectory.rows.push_back(std::move(row));
  };

  emit();
  for (std::int64_t i = 0; i < config.iterations; ++i) {
    try {
      run_round(state, data, A, config);
    } catch (const DivergenceError& err) {
      trajectory.diverged = true;
      trajectory.diverged_server = err.server();
      trajectory.diverged_iteration = err.iteration();
      break;
    }
    emit();
  }
  return trajectory;
}

}  // namespace gfl
