#pragma once

// Synthetic federated datasets: a P x K grid of client datasets holding
// labeled feature vectors.  Labels are +/-1; features for a point with label
// y are drawn from N(y * 1_M, sigma^2 I) with a per-client sigma drawn
// uniformly from a configurable range.  Generation is fully determined by
// the seed.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfl/rng.hpp"

namespace gfl {

struct DataPoint {
  std::vector<double> feature;
  double label = 1.0;  // strictly +1 or -1

  bool operator==(const DataPoint&) const = default;
};

struct ClientDataset {
  std::vector<DataPoint> points;

  int size() const { return static_cast<int>(points.size()); }
  bool operator==(const ClientDataset&) const = default;
};

struct DatasetParams {
  int servers = 10;
  int clients = 50;
  int points_per_client = 100;
  int dim = 2;
  double sigma_min = 0.5;
  double sigma_max = 1.5;
  std::uint64_t seed = 1;

  bool operator==(const DatasetParams&) const = default;
};

class FederatedDataset {
 public:
  FederatedDataset(int servers, int clients, int dim, std::uint64_t seed,
                   std::vector<ClientDataset> grid)
      : servers_(servers), clients_(clients), dim_(dim), seed_(seed),
        grid_(std::move(grid)) {
    if (servers_ < 1 || clients_ < 1 || dim_ < 1) {
      throw std::invalid_argument("FederatedDataset: counts must be >= 1");
    }
    if (grid_.size() != static_cast<std::size_t>(servers_) *
                            static_cast<std::size_t>(clients_)) {
      throw std::invalid_argument("FederatedDataset: grid not fully populated");
    }
    for (const ClientDataset& c : grid_) {
      if (c.points.empty()) {
        throw std::invalid_argument("FederatedDataset: empty client dataset");
      }
      for (const DataPoint& x : c.points) {
        if (x.feature.size() != static_cast<std::size_t>(dim_)) {
          throw std::invalid_argument("FederatedDataset: feature length mismatch");
        }
        if (x.label != 1.0 && x.label != -1.0) {
          throw std::invalid_argument("FederatedDataset: label must be +1 or -1");
        }
        for (double h : x.feature) {
          if (!std::isfinite(h)) {
            throw std::invalid_argument("FederatedDataset: non-finite feature");
          }
        }
      }
    }
  }

  int servers() const { return servers_; }
  int clients_per_server() const { return clients_; }
  int dim() const { return dim_; }
  std::uint64_t seed() const { return seed_; }

  const ClientDataset& client(int p, int k) const {
    return grid_[static_cast<std::size_t>(p) * static_cast<std::size_t>(clients_) +
                 static_cast<std::size_t>(k)];
  }

  std::size_t total_points() const {
    std::size_t n = 0;
    for (const ClientDataset& c : grid_) {
      n += c.points.size();
    }
    return n;
  }

  // Functional replacement of one client's data (neighboring-dataset runs).
  FederatedDataset replaced(int p, int k, ClientDataset substitute) const {
    std::vector<ClientDataset> grid = grid_;
    grid[static_cast<std::size_t>(p) * static_cast<std::size_t>(clients_) +
         static_cast<std::size_t>(k)] = std::move(substitute);
    return FederatedDataset(servers_, clients_, dim_, seed_, std::move(grid));
  }

  // Data equality (seed is provenance, not content).
  bool operator==(const FederatedDataset& other) const {
    return servers_ == other.servers_ && clients_ == other.clients_ &&
           dim_ == other.dim_ && grid_ == other.grid_;
  }

 private:
  int servers_;
  int clients_;
  int dim_;
  std::uint64_t seed_;
  std::vector<ClientDataset> grid_;
};

inline FederatedDataset generate_synthetic(const DatasetParams& params) {
  if (params.servers < 1 || params.clients < 1 || params.points_per_client < 1 ||
      params.dim < 1) {
    throw std::invalid_argument("generate_synthetic: counts must be >= 1");
  }
  if (params.sigma_min < 0.0 || params.sigma_max < params.sigma_min) {
    throw std::invalid_argument("generate_synthetic: need 0 <= sigma_min <= sigma_max");
  }
  std::vector<ClientDataset> grid;
  grid.reserve(static_cast<std::size_t>(params.servers) *
               static_cast<std::size_t>(params.clients));
  for (int p = 0; p < params.servers; ++p) {
    for (int k = 0; k < params.clients; ++k) {
      const auto sp = static_cast<std::uint64_t>(p);
      const auto sk = static_cast<std::uint64_t>(k);
      RngStream sigma_rng(params.seed, Stream::client_sigma, sp, sk);
      const double sigma = sigma_rng.uniform(params.sigma_min, params.sigma_max);
      RngStream rng(params.seed, Stream::data_gen, sp, sk);
      ClientDataset client;
      client.points.resize(static_cast<std::size_t>(params.points_per_client));
      for (DataPoint& x : client.points) {
        x.label = rng.next_double() < 0.5 ? -1.0 : 1.0;
        x.feature.resize(static_cast<std::size_t>(params.dim));
        rng.fill_gaussian(x.feature, 0.0, 1.0);
        for (double& h : x.feature) {
          h = x.label + sigma * h;
        }
      }
      grid.push_back(std::move(client));
    }
  }
  return FederatedDataset(params.servers, params.clients, params.dim, params.seed,
                          std::move(grid));
}

namespace detail {

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

// Columns: p,k,n,gamma,h_1,...,h_M.  Doubles are printed with 17 significant
// digits, so import reproduces the dataset bit-exactly.
inline void export_csv(const FederatedDataset& data, std::ostream& out) {
  out << "p,k,n,gamma";
  for (int j = 1; j <= data.dim(); ++j) {
    out << ",h_" << j;
  }
  out << '\n';
  for (int p = 0; p < data.servers(); ++p) {
    for (int k = 0; k < data.clients_per_server(); ++k) {
      const ClientDataset& c = data.client(p, k);
      for (int n = 0; n < c.size(); ++n) {
        const DataPoint& x = c.points[static_cast<std::size_t>(n)];
        out << p << ',' << k << ',' << n << ','
            << static_cast<int>(x.label);
        for (double h : x.feature) {
          out << ',' << detail::format_double(h);
        }
        out << '\n';
      }
    }
  }
}

inline FederatedDataset import_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) {
    throw std::invalid_argument("import_csv: missing header");
  }
  int dim = 0;
  {
    std::istringstream header(line);
    std::string col;
    std::vector<std::string> cols;
    while (std::getline(header, col, ',')) {
      cols.push_back(col);
    }
    if (cols.size() < 5 || cols[0] != "p" || cols[1] != "k" || cols[2] != "n" ||
        cols[3] != "gamma") {
      throw std::invalid_argument("import_csv: unexpected header '" + line + "'");
    }
    dim = static_cast<int>(cols.size()) - 4;
  }

  struct Key {
    int p;
    int k;
  };
  std::vector<std::pair<Key, DataPoint>> rows;
  int max_p = -1;
  int max_k = -1;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) {
      fields.push_back(field);
    }
    if (fields.size() != static_cast<std::size_t>(dim) + 4) {
      throw std::invalid_argument("import_csv: wrong column count at line " +
                                  std::to_string(line_no));
    }
    Key key{std::atoi(fields[0].c_str()), std::atoi(fields[1].c_str())};
    DataPoint x;
    x.label = std::strtod(fields[3].c_str(), nullptr);
    if (x.label != 1.0 && x.label != -1.0) {
      throw std::invalid_argument("import_csv: label must be +1 or -1 at line " +
                                  std::to_string(line_no));
    }
    x.feature.resize(static_cast<std::size_t>(dim));
    for (int j = 0; j < dim; ++j) {
      x.feature[static_cast<std::size_t>(j)] =
          std::strtod(fields[static_cast<std::size_t>(j) + 4].c_str(), nullptr);
    }
    max_p = std::max(max_p, key.p);
    max_k = std::max(max_k, key.k);
    rows.emplace_back(key, std::move(x));
  }
  if (rows.empty()) {
    throw std::invalid_argument("import_csv: no data rows");
  }
  const int servers = max_p + 1;
  const int clients = max_k + 1;
  std::vector<ClientDataset> grid(static_cast<std::size_t>(servers) *
                                  static_cast<std::size_t>(clients));
  for (auto& [key, x] : rows) {
    if (key.p < 0 || key.k < 0) {
      throw std::invalid_argument("import_csv: negative client coordinates");
    }
    grid[static_cast<std::size_t>(key.p) * static_cast<std::size_t>(clients) +
         static_cast<std::size_t>(key.k)]
        .points.push_back(std::move(x));
  }
  return FederatedDataset(servers, clients, dim, 0, std::move(grid));
}

}  // namespace gfl
