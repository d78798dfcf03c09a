#pragma once

// Doubly-stochastic combination matrices over server graphs.
//
// Weights follow the Metropolis-Hastings rule: for adjacent m != p,
// a_mp = 1 / (1 + max(deg_m, deg_p)); the diagonal absorbs the remainder.
// This yields symmetric, doubly-stochastic weights with a strictly positive
// diagonal from the topology alone.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfl/graph.hpp"

namespace gfl {

struct CombinationMatrix {
  int size = 0;
  std::vector<double> weights;  // row-major; at(m, p) = weight a_mp
  double lambda = 0.0;          // spectral radius of A - (1/P) 1 1^T

  double at(int m, int p) const {
    return weights[static_cast<std::size_t>(m) * static_cast<std::size_t>(size) +
                   static_cast<std::size_t>(p)];
  }
  double& at(int m, int p) {
    return weights[static_cast<std::size_t>(m) * static_cast<std::size_t>(size) +
                   static_cast<std::size_t>(p)];
  }
};

namespace detail {

// Cyclic Jacobi eigenvalue iteration for symmetric matrices; returns the
// eigenvalues in unspecified order.  Destroys its working copy.
inline std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n) {
  const auto idx = [n](int i, int j) {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
           static_cast<std::size_t>(j);
  };
  double frob = 0.0;
  for (double v : a) {
    frob += v * v;
  }
  frob = std::sqrt(frob);
  const double tol = 1e-14 * (1.0 + frob);

  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        off += 2.0 * a[idx(p, q)] * a[idx(p, q)];
      }
    }
    if (std::sqrt(off) <= tol) {
      break;
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[idx(p, q)];
        if (std::abs(apq) <= 1e-300) {
          continue;
        }
        const double theta = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        const double app = a[idx(p, p)];
        const double aqq = a[idx(q, q)];
        a[idx(p, p)] = c * c * app - 2.0 * s * c * apq + s * s * aqq;
        a[idx(q, q)] = s * s * app + 2.0 * s * c * apq + c * c * aqq;
        a[idx(p, q)] = 0.0;
        a[idx(q, p)] = 0.0;
        for (int r = 0; r < n; ++r) {
          if (r == p || r == q) {
            continue;
          }
          const double arp = a[idx(r, p)];
          const double arq = a[idx(r, q)];
          a[idx(r, p)] = c * arp - s * arq;
          a[idx(p, r)] = a[idx(r, p)];
          a[idx(r, q)] = s * arp + c * arq;
          a[idx(q, r)] = a[idx(r, q)];
        }
      }
    }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    eig[static_cast<std::size_t>(i)] = a[idx(i, i)];
  }
  return eig;
}

// Spectral radius of B = A - (1/P) 1 1^T by power iteration (large P).
inline double power_iteration_gap(const CombinationMatrix& A) {
  const int n = A.size;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    v[static_cast<std::size_t>(j)] =
        (mix64(static_cast<std::uint64_t>(j) + 1) >> 11) * 0x1.0p-53 - 0.5;
  }
  std::vector<double> w(static_cast<std::size_t>(n));
  double lambda = 0.0;
  for (int it = 0; it < 100000; ++it) {
    double norm_v = 0.0;
    for (double x : v) {
      norm_v += x * x;
    }
    norm_v = std::sqrt(norm_v);
    if (norm_v == 0.0) {
      return 0.0;
    }
    for (double& x : v) {
      x /= norm_v;
    }
    double mean = 0.0;
    for (double x : v) {
      mean += x;
    }
    mean /= n;
    for (int p = 0; p < n; ++p) {
      double acc = 0.0;
      for (int m = 0; m < n; ++m) {
        acc += A.at(p, m) * v[static_cast<std::size_t>(m)];
      }
      w[static_cast<std::size_t>(p)] = acc - mean;
    }
    double norm_w = 0.0;
    for (double x : w) {
      norm_w += x * x;
    }
    norm_w = std::sqrt(norm_w);
    if (std::abs(norm_w - lambda) <= 1e-12 * std::max(1.0, norm_w)) {
      return norm_w;
    }
    lambda = norm_w;
    std::swap(v, w);
  }
  return lambda;
}

}  // namespace detail

// rho(A - (1/P) 1 1^T): full symmetric eigen-solve at desk scale, power
// iteration above it.
inline double spectral_gap(const CombinationMatrix& A) {
  const int n = A.size;
  if (n > 512) {
    return detail::power_iteration_gap(A);
  }
  std::vector<double> b = A.weights;
  const double shift = 1.0 / static_cast<double>(n);
  for (double& v : b) {
    v -= shift;
  }
  double radius = 0.0;
  for (double e : detail::symmetric_eigenvalues(std::move(b), n)) {
    radius = std::max(radius, std::abs(e));
  }
  return radius;
}

inline CombinationMatrix build_combination_matrix(const GraphSpec& spec) {
  if (const auto bad = spec.unreachable_node()) {
    throw std::invalid_argument(
        "build_combination_matrix: graph is disconnected; node " +
        std::to_string(*bad) + " is unreachable from node 0");
  }
  const int n = spec.node_count();
  CombinationMatrix A;
  A.size = n;
  A.weights.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
  for (int p = 0; p < n; ++p) {
    double off_sum = 0.0;
    for (int m = 0; m < n; ++m) {
      if (m == p || !spec.adjacent(m, p)) {
        continue;
      }
      const double w = 1.0 / (1.0 + std::max(spec.degree(m), spec.degree(p)));
      A.at(p, m) = w;
      off_sum += w;
    }
    A.at(p, p) = 1.0 - off_sum;
  }
  A.lambda = spectral_gap(A);
  return A;
}

struct MatrixCheck {
  std::string name;
  bool pass = false;
  double residual = 0.0;
};

struct ValidationReport {
  std::vector<MatrixCheck> checks;
  double lambda = 0.0;

  bool ok() const {
    for (const MatrixCheck& c : checks) {
      if (!c.pass) {
        return false;
      }
    }
    return true;
  }

  std::string to_text() const {
    std::ostringstream out;
    for (const MatrixCheck& c : checks) {
      out << (c.pass ? "pass" : "FAIL") << "  " << c.name
          << "  residual=" << c.residual << '\n';
    }
    return out.str();
  }
};

// Checks the combination-matrix contract: symmetry (exact), row sums within
// 1e-12 of one, nonnegative entries, strictly positive diagonal, and
// spectral gap lambda < 1.
inline ValidationReport validate(const CombinationMatrix& A) {
  if (A.size < 1 ||
      A.weights.size() != static_cast<std::size_t>(A.size) *
                              static_cast<std::size_t>(A.size)) {
    throw std::invalid_argument("validate: malformed combination matrix");
  }
  ValidationReport report;
  const int n = A.size;

  double asym = 0.0;
  for (int m = 0; m < n; ++m) {
    for (int p = m + 1; p < n; ++p) {
      asym = std::max(asym, std::abs(A.at(m, p) - A.at(p, m)));
    }
  }
  report.checks.push_back({"symmetry", asym == 0.0, asym});

  double row_dev = 0.0;
  for (int p = 0; p < n; ++p) {
    double sum = 0.0;
    for (int m = 0; m < n; ++m) {
      sum += A.at(p, m);
    }
    row_dev = std::max(row_dev, std::abs(sum - 1.0));
  }
  report.checks.push_back({"doubly_stochastic_rows", row_dev < 1e-12, row_dev});

  double min_entry = 0.0;
  for (double v : A.weights) {
    min_entry = std::min(min_entry, v);
  }
  report.checks.push_back({"nonnegative_entries", min_entry >= 0.0, -min_entry});

  double min_diag = A.at(0, 0);
  for (int p = 0; p < n; ++p) {
    min_diag = std::min(min_diag, A.at(p, p));
  }
  report.checks.push_back(
      {"positive_diagonal", min_diag > 0.0, std::max(0.0, -min_diag)});

  report.lambda = spectral_gap(A);
  report.checks.push_back(
      {"spectral_gap_below_one", report.lambda < 1.0 - 1e-10, report.lambda});

  return report;
}

}  // namespace gfl
