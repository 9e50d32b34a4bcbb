#include "oracles.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_dec_float.hpp>

#include <bit>
#include <cmath>
#include <numeric>

namespace oracle {

using LMatrix = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

Matrix taylor_expm(const Matrix& m, double t) {
  LMatrix x = (m * t).cast<long double>();
  const long double norm = x.cwiseAbs().rowwise().sum().maxCoeff();
  int squarings = 0;
  while (norm / std::ldexp(1.0L, squarings) > 0.25L) ++squarings;
  x /= std::ldexp(1.0L, squarings);
  const auto n = x.rows();
  LMatrix term = LMatrix::Identity(n, n);
  LMatrix sum = term;
  for (int k = 1; k <= 30; ++k) {
    term = term * x / static_cast<long double>(k);
    sum += term;
  }
  for (int s = 0; s < squarings; ++s) sum = sum * sum;
  return sum.cast<double>();
}

double kernel_derivative(const ftobs::kernel::KernelParams& p, int order, double t, double tau) {
  using Dec = boost::multiprecision::cpp_dec_float_50;
  // K(t, tau) = sum_k C(delta, k) (-1)^k exp(-w t) exp((w - k wb) tau)
  const Dec w = p.omega_h();
  const Dec wb = p.omega_bar();
  const Dec tt = t;
  const Dec ta = tau;
  Dec sum = 0;
  Dec binom = 1;
  for (int k = 0; k <= p.delta(); ++k) {
    const Dec rate = w - Dec(k) * wb;
    Dec term = binom * pow(rate, order) * exp(-w * tt + rate * ta);
    if (k % 2 == 1) term = -term;
    sum += term;
    binom = binom * Dec(p.delta() - k) / Dec(k + 1);
  }
  return static_cast<double>(sum);
}

double volterra(const ftobs::kernel::KernelParams& p, int order,
                const std::function<double(double)>& w, double t) {
  auto f = [&](double tau) { return kernel_derivative(p, order, t, tau) * w(tau); };
  double err = 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, t, 15, 1e-14, &err);
}

Vector characteristic_polynomial(const Matrix& m) {
  const auto n = m.rows();
  Vector c(n);
  Matrix mk = Matrix::Zero(n, n);
  double ck = 1.0;
  for (Eigen::Index k = 1; k <= n; ++k) {
    mk = m * mk + ck * Matrix::Identity(n, n);
    ck = -(m * mk).trace() / static_cast<double>(k);
    c(n - k) = ck;
  }
  return c;
}

int lu_rank(const Matrix& m, double threshold) {
  Matrix s = m;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double nr = s.row(r).norm();
    if (nr > 0) s.row(r) /= nr;
  }
  Eigen::FullPivLU<Matrix> lu(s);
  lu.setThreshold(threshold);
  return static_cast<int>(lu.rank());
}

Matrix obsv(const Matrix& a, const Matrix& c) {
  const auto n = a.rows();
  Matrix o(c.rows() * n, n);
  Matrix block = c;
  for (Eigen::Index k = 0; k < n; ++k) {
    o.middleRows(k * c.rows(), c.rows()) = block;
    block = block * a;
  }
  return o;
}

long long count_walks(const ftobs::topology::IntMatrix& adj, int from, int to, int length) {
  if (length == 0) return from == to ? 1 : 0;
  long long total = 0;
  for (int k = 0; k < adj.rows(); ++k) {
    if (adj(from, k) != 0) total += count_walks(adj, k, to, length - 1);
  }
  return total;
}

std::vector<int> hop_distance_to(const ftobs::topology::IntMatrix& adj, int to) {
  const int n = static_cast<int>(adj.rows());
  std::vector<int> dist(static_cast<std::size_t>(n), -1);
  dist[static_cast<std::size_t>(to)] = 0;
  // Bellman-Ford style relaxation rather than a queue.
  for (int round = 0; round < n; ++round) {
    for (int u = 0; u < n; ++u) {
      for (int v = 0; v < n; ++v) {
        if (adj(u, v) == 0 || dist[static_cast<std::size_t>(v)] < 0) continue;
        const int cand = dist[static_cast<std::size_t>(v)] + 1;
        int& du = dist[static_cast<std::size_t>(u)];
        if (du < 0 || cand < du) du = cand;
      }
    }
  }
  return dist;
}

CnOracle brute_force_cn(const ftobs::topology::IntMatrix& adj, const Matrix& a,
                        const std::vector<Matrix>& c_blocks, int node) {
  const int count = static_cast<int>(adj.rows());
  const auto n = static_cast<int>(a.rows());
  auto rank_of = [&](unsigned mask) {
    std::vector<const Matrix*> blocks{&c_blocks[static_cast<std::size_t>(node)]};
    Eigen::Index rows = blocks[0]->rows();
    for (int j = 0; j < count; ++j) {
      if (mask & (1u << j)) {
        blocks.push_back(&c_blocks[static_cast<std::size_t>(j)]);
        rows += c_blocks[static_cast<std::size_t>(j)].rows();
      }
    }
    Matrix c(rows, n);
    Eigen::Index at = 0;
    for (const auto* b : blocks) {
      c.middleRows(at, b->rows()) = *b;
      at += b->rows();
    }
    return rows == 0 ? 0 : lu_rank(obsv(a, c));
  };

  CnOracle out;
  if (rank_of(0) == n) return out;
  const auto d = hop_distance_to(adj, node);
  for (int p = 1; p < std::max(count, 2); ++p) {
    unsigned pool = 0;
    for (int j = 0; j < count; ++j) {
      if (j != node && d[static_cast<std::size_t>(j)] > 0 && d[static_cast<std::size_t>(j)] <= p) pool |= 1u << j;
    }
    if (rank_of(pool) != n) continue;
    out.step = p;
    int best_size = count + 1;
    std::vector<int> best;
    for (unsigned mask = 1; mask < (1u << count); ++mask) {
      if ((mask & ~pool) != 0) continue;
      const int size = std::popcount(mask);
      if (size > best_size || rank_of(mask) != n) continue;
      std::vector<int> set;
      for (int j = 0; j < count; ++j) {
        if (mask & (1u << j)) set.push_back(j);
      }
      if (size < best_size || set < best) {
        best_size = size;
        best = set;
      }
    }
    out.set = best;
    return out;
  }
  out.step = -1;
  return out;
}

Matrix random_matrix(std::mt19937_64& rng, int rows, int cols, int lo, int hi) {
  std::uniform_int_distribution<int> d(lo, hi);
  Matrix m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = d(rng);
  }
  return m;
}

RandomNetwork random_network(std::mt19937_64& rng, int nodes, int n) {
  RandomNetwork net;
  net.a = random_matrix(rng, n, n, -2, 2);
  std::bernoulli_distribution sparse(0.4);
  std::uniform_int_distribution<int> rows_per(1, 2);
  for (int i = 0; i < nodes; ++i) {
    Matrix c(rows_per(rng), n);
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      do {
        for (int k = 0; k < n; ++k) c(r, k) = sparse(rng) ? std::uniform_int_distribution<int>(1, 3)(rng) : 0;
      } while (c.row(r).cwiseAbs().sum() == 0);
    }
    net.c_blocks.push_back(c);
  }
  // Ring for strong connectivity plus random extra edges.
  net.adjacency = ftobs::topology::IntMatrix::Zero(nodes, nodes);
  std::vector<int> order(static_cast<std::size_t>(nodes));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (int k = 0; k < nodes && nodes > 1; ++k) {
    net.adjacency(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>((k + 1) % nodes)]) = 1;
  }
  std::bernoulli_distribution extra(0.3);
  for (int i = 0; i < nodes; ++i) {
    for (int j = 0; j < nodes; ++j) {
      if (i != j && extra(rng)) net.adjacency(i, j) = 1;
    }
  }
  return net;
}

}  // namespace oracle
