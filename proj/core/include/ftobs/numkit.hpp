#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

#include "ftobs/error.hpp"

namespace ftobs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

}  // namespace ftobs

namespace ftobs::numkit {

/// Relative singular-value threshold used wherever a numerical rank is needed.
class RankTolerance {
 public:
  static constexpr double kDefault = 1e-9;

  constexpr RankTolerance() = default;
  explicit RankTolerance(double relative_threshold);

  constexpr double relative_threshold() const noexcept { return threshold_; }

 private:
  double threshold_ = kDefault;
};

struct RowBasis {
  Matrix basis_rows;       // orthonormal rows spanning row(M)
  Matrix complement_rows;  // orthonormal rows spanning row(M)^perp
};

/// Throws InvalidMatrix if any entry is NaN or infinite.
void require_finite(const Matrix& m, const char* what);

std::size_t numerical_rank(const Matrix& m, RankTolerance tol = {});

/// e^{M t}. Backed by Eigen's scaling-and-squaring Pade evaluator.
Matrix matrix_exponential(const Matrix& m, double t);

RowBasis orthonormal_row_basis(const Matrix& m, RankTolerance tol = {});

/// Smallest singular value of a (possibly wide) matrix, i.e. sigma_{rows} when
/// rows <= cols. Returns 0 for an empty matrix.
double smallest_singular_value(const Matrix& m);

double condition_number(const Matrix& m);

/// Picks k rows of `candidates` so that [base; picked] gains full column rank.
/// Rows are chosen greedily: each round keeps the candidate that maximises the
/// smallest singular value of the growing stack, ties going to the lower index.
/// Returned indices are in selection order.
std::vector<std::size_t> pivoted_row_select(const Matrix& candidates,
                                            const Matrix& base, std::size_t k,
                                            RankTolerance tol = {});

/// Same greedy rule without the "completes to full column rank" precondition;
/// used to thin a redundant stack down to k independent rows.
std::vector<std::size_t> greedy_row_select(const Matrix& candidates,
                                           const Matrix& base, std::size_t k);

/// Stack rows of `m` in the given order.
Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows);

/// Scale every nonzero row to unit Euclidean norm (rank-preserving).
Matrix normalize_rows(const Matrix& m);

Matrix vstack(const std::vector<Matrix>& blocks, Eigen::Index cols);

/// One classical four-stage Runge-Kutta step of x' = f(t, x).
template <class State, class Rhs>
State rk4_step(const State& x, double t, double dt, Rhs&& f) {
  const State k1 = f(t, x);
  const State k2 = f(t + 0.5 * dt, State(x + (0.5 * dt) * k1));
  const State k3 = f(t + 0.5 * dt, State(x + (0.5 * dt) * k2));
  const State k4 = f(t + dt, State(x + dt * k3));
  return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace ftobs::numkit
