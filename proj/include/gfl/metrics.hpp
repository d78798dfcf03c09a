#pragma once

// Trajectory metrics: network centroid, centroid error against the global
// optimum, disagreement across servers, and the gradient-noise variance
// evaluated at the optimum.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfl/dataset.hpp"
#include "gfl/logistic.hpp"
#include "gfl/vec.hpp"

namespace gfl {

struct MetricsRow {
  std::int64_t iteration = 0;
  std::vector<double> centroid;
  double mse = 0.0;     // || w_opt - centroid ||^2
  double msd_db = 0.0;  // 10 log10(mse)
  double disagreement = 0.0;
  std::string scheme;
  int run = 0;
};

inline std::vector<double> network_centroid(
    const std::vector<std::vector<double>>& models) {
  return mean_of(models);
}

// Mean squared deviation of the server models from their centroid.
inline double network_disagreement(const std::vector<std::vector<double>>& models) {
  const std::vector<double> centroid = network_centroid(models);
  double total = 0.0;
  for (const auto& w : models) {
    total += squared_distance(centroid, w);
  }
  return total / static_cast<double>(models.size());
}

inline double to_db(double mse) { return 10.0 * std::log10(mse); }

// Twice the average squared per-sample gradient norm at the optimum,
// averaged per client and then across the grid.
inline double gradient_noise_variance(const FederatedDataset& data,
                                      const std::vector<double>& w_opt,
                                      double reg) {
  double total = 0.0;
  std::vector<double> g(w_opt.size());
  for (int p = 0; p < data.servers(); ++p) {
    for (int k = 0; k < data.clients_per_server(); ++k) {
      const ClientDataset& c = data.client(p, k);
      double client_sum = 0.0;
      for (const DataPoint& x : c.points) {
        g.assign(w_opt.size(), 0.0);
        add_loss_gradient(w_opt, x, reg, g);
        client_sum += squared_norm(g);
      }
      total += client_sum / c.size();
    }
  }
  return 2.0 * total / (static_cast<double>(data.servers()) *
                        static_cast<double>(data.clients_per_server()));
}

// Mean of the final `window` mse values, in dB.
inline double steady_state_msd(const std::vector<double>& mse_series, int window) {
  if (window < 1) {
    throw std::invalid_argument("steady_state_msd: window must be >= 1");
  }
  if (static_cast<std::size_t>(window) > mse_series.size()) {
    throw std::invalid_argument("steady_state_msd: trajectory shorter than window");
  }
  double total = 0.0;
  for (std::size_t i = mse_series.size() - static_cast<std::size_t>(window);
       i < mse_series.size(); ++i) {
    total += mse_series[i];
  }
  return to_db(total / window);
}

}  // namespace gfl
