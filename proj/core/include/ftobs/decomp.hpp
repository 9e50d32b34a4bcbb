#pragma once

#include <cstddef>
#include <variant>
#include <vector>

#include "ftobs/numkit.hpp"

namespace ftobs::decomp {

using RowVector = Eigen::RowVectorXd;
using numkit::RankTolerance;

/// [C; CA; ...; CA^{n-1}].
Matrix observability_matrix(const Matrix& a, const Matrix& c);

/// Orthogonal split of R^n into the part of the state seen by C_i and the rest.
///
/// Rows of `t` are [t_o; t_u]; in these coordinates
///   t a t' = [a_o 0; a_r a_u],   c t' = [c_o 0].
struct ObservabilityDecomposition {
  Matrix t;
  Matrix t_o;
  Matrix t_u;
  Matrix a_o;
  Matrix a_r;
  Matrix a_u;
  Matrix c_o;
  std::size_t observable_dim = 0;

  std::size_t state_dim() const { return static_cast<std::size_t>(t.rows()); }
};

ObservabilityDecomposition decompose(const Matrix& a, const Matrix& c_i,
                                     RankTolerance tol = {});

/// A scalar output that keeps the whole observable block observable.
struct ScalarOutput {
  RowVector weights;  // y_scalar = weights * y_i
  RowVector c_row;    // weights * c_o, expressed in observable coordinates
  int attempt = 0;    // 1-based index into scalarization_weights
};

/// Every single weighted combination failed to preserve observability; each
/// output row has to be run as its own channel.
struct PerRowSplit {};

using Scalarization = std::variant<ScalarOutput, PerRowSplit>;

inline constexpr int kScalarizationAttempts = 16;

/// Deterministic weight sequence: all-ones first, then (k^0, k^1, ...) for
/// k = 2..attempts.
std::vector<RowVector> scalarization_weights(Eigen::Index outputs,
                                             int attempts = kScalarizationAttempts);

Scalarization scalarize_output(const ObservabilityDecomposition& dec,
                               RankTolerance tol = {});

/// Companion layout with ones on the superdiagonal and
/// (a_{n-1}, ..., a_1, a_0) down the first column.
Matrix companion_matrix(const Vector& coefficients);

struct CanonicalForm {
  Matrix t_z;          // z = t_z * xbar_o
  Matrix a_z;          // companion_matrix(coefficients)
  Vector coefficients; // a_0 .. a_{n_i-1}, y^{(n)} = sum_p a_p y^{(p)}
  RowVector c_row;     // scalar output row in observable coordinates
  Matrix t_alpha;      // z = t_alpha * x
};

inline constexpr double kCanonicalConditionLimit = 1e10;

CanonicalForm canonical_form(const ObservabilityDecomposition& dec,
                             const RowVector& c_row);

}  // namespace ftobs::decomp
