#pragma once

// Server communication graphs.  Edges are unordered pairs of server ids;
// self-loops are implicit (every server always hears itself).

#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "gfl/rng.hpp"

namespace gfl {

class GraphSpec {
 public:
  using Edge = std::pair<int, int>;  // normalized: first < second

  GraphSpec(int node_count, std::set<Edge> edges)
      : node_count_(node_count), edges_(std::move(edges)) {
    if (node_count_ < 1) {
      throw std::invalid_argument("GraphSpec: node_count must be >= 1");
    }
    for (const Edge& e : edges_) {
      if (e.first == e.second) {
        throw std::invalid_argument("GraphSpec: explicit self-loop on node " +
                                    std::to_string(e.first));
      }
      if (e.first < 0 || e.second >= node_count_ || e.first > e.second) {
        throw std::invalid_argument("GraphSpec: edge " + std::to_string(e.first) +
                                    "-" + std::to_string(e.second) +
                                    " out of range for " +
                                    std::to_string(node_count_) + " nodes");
      }
    }
    degree_.assign(static_cast<std::size_t>(node_count_), 0);
    for (const Edge& e : edges_) {
      ++degree_[static_cast<std::size_t>(e.first)];
      ++degree_[static_cast<std::size_t>(e.second)];
    }
  }

  static GraphSpec from_edge_list(int node_count, const std::vector<Edge>& list) {
    std::set<Edge> edges;
    for (Edge e : list) {
      if (e.first > e.second) {
        std::swap(e.first, e.second);
      }
      edges.insert(e);
    }
    return GraphSpec(node_count, std::move(edges));
  }

  static GraphSpec ring(int n) {
    std::set<Edge> edges;
    for (int i = 0; i + 1 < n; ++i) {
      edges.emplace(i, i + 1);
    }
    if (n > 2) {
      edges.emplace(0, n - 1);
    }
    return GraphSpec(n, std::move(edges));
  }

  static GraphSpec complete(int n) {
    std::set<Edge> edges;
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        edges.emplace(i, j);
      }
    }
    return GraphSpec(n, std::move(edges));
  }

  // Erdos-Renyi with connectivity retries; after the retry budget the last
  // draw is augmented with a spanning ring so the result is always connected.
  static GraphSpec random_connected(int n, double edge_prob, std::uint64_t seed,
                                    int max_attempts = 32) {
    if (edge_prob < 0.0 || edge_prob > 1.0) {
      throw std::invalid_argument("GraphSpec: edge probability must be in [0,1]");
    }
    std::set<Edge> edges;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
      edges.clear();
      RngStream rng(seed, Stream::graph_gen, static_cast<std::uint64_t>(attempt));
      for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
          if (rng.next_double() < edge_prob) {
            edges.emplace(i, j);
          }
        }
      }
      GraphSpec g(n, edges);
      if (g.connected()) {
        return g;
      }
    }
    GraphSpec fallback = ring(n);
    edges.insert(fallback.edges().begin(), fallback.edges().end());
    return GraphSpec(n, std::move(edges));
  }

  // Accepted forms (node count comes from context):
  //   "ring" | "complete" | "random <edge_prob> [seed]" | "edges m-p m-p ..."
  static GraphSpec parse(const std::string& text, int node_count) {
    std::istringstream in(text);
    std::string kind;
    if (!(in >> kind)) {
      throw std::invalid_argument("graph spec: empty text");
    }
    if (kind == "ring") {
      return ring(node_count);
    }
    if (kind == "complete") {
      return complete(node_count);
    }
    if (kind == "random") {
      double prob = 0.0;
      if (!(in >> prob)) {
        throw std::invalid_argument("graph spec: 'random' needs an edge probability");
      }
      std::uint64_t seed = 0;
      in >> seed;
      return random_connected(node_count, prob, seed);
    }
    if (kind == "edges") {
      std::vector<Edge> list;
      std::string tok;
      while (in >> tok) {
        const auto dash = tok.find('-');
        if (dash == std::string::npos || dash == 0 || dash + 1 == tok.size()) {
          throw std::invalid_argument("graph spec: bad edge token '" + tok + "'");
        }
        try {
          list.emplace_back(std::stoi(tok.substr(0, dash)),
                            std::stoi(tok.substr(dash + 1)));
        } catch (const std::exception&) {
          throw std::invalid_argument("graph spec: bad edge token '" + tok + "'");
        }
      }
      return from_edge_list(node_count, list);
    }
    throw std::invalid_argument("graph spec: unknown preset '" + kind + "'");
  }

  int node_count() const { return node_count_; }
  const std::set<Edge>& edges() const { return edges_; }

  bool adjacent(int m, int p) const {
    if (m == p) {
      return false;
    }
    if (m > p) {
      std::swap(m, p);
    }
    return edges_.count({m, p}) > 0;
  }

  // neighbour count excluding the implicit self-loop
  int degree(int p) const { return degree_[static_cast<std::size_t>(p)]; }

  std::vector<int> neighbors(int p) const {
    std::vector<int> out;
    for (int m = 0; m < node_count_; ++m) {
      if (adjacent(m, p)) {
        out.push_back(m);
      }
    }
    return out;
  }

  bool connected() const { return !unreachable_node().has_value(); }

  // Lowest node id not reachable from node 0, if any.
  std::optional<int> unreachable_node() const {
    std::vector<char> seen(static_cast<std::size_t>(node_count_), 0);
    std::queue<int> frontier;
    frontier.push(0);
    seen[0] = 1;
    while (!frontier.empty()) {
      const int v = frontier.front();
      frontier.pop();
      for (int m : neighbors(v)) {
        if (!seen[static_cast<std::size_t>(m)]) {
          seen[static_cast<std::size_t>(m)] = 1;
          frontier.push(m);
        }
      }
    }
    for (int v = 0; v < node_count_; ++v) {
      if (!seen[static_cast<std::size_t>(v)]) {
        return v;
      }
    }
    return std::nullopt;
  }

  // Canonical parseable form.
  std::string to_string() const {
    std::ostringstream out;
    out << "edges";
    for (const Edge& e : edges_) {
      out << ' ' << e.first << '-' << e.second;
    }
    return out.str();
  }

 private:
  int node_count_;
  std::set<Edge> edges_;
  std::vector<int> degree_;
};

}  // namespace gfl
