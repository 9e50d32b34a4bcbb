#include "ftobs/decomp.hpp"

#include <cmath>
#include <sstream>

namespace ftobs::decomp {

Matrix observability_matrix(const Matrix& a, const Matrix& c) {
  if (a.rows() != a.cols() || c.cols() != a.cols()) {
    std::ostringstream os;
    os << "observability matrix: A is " << a.rows() << "x" << a.cols() << ", C is "
       << c.rows() << "x" << c.cols();
    throw Error(ErrorCode::DimensionMismatch, os.str());
  }
  numkit::require_finite(a, "A");
  numkit::require_finite(c, "C");
  const Eigen::Index n = a.rows();
  const Eigen::Index m = c.rows();
  Matrix obs(n * m, n);
  Matrix block = c;
  for (Eigen::Index k = 0; k < n; ++k) {
    obs.middleRows(k * m, m) = block;
    block = block * a;
  }
  return obs;
}

ObservabilityDecomposition decompose(const Matrix& a, const Matrix& c_i,
                                     RankTolerance tol) {
  const Matrix obs = observability_matrix(a, c_i);
  auto basis = numkit::orthonormal_row_basis(obs, tol);

  ObservabilityDecomposition dec;
  dec.observable_dim = static_cast<std::size_t>(basis.basis_rows.rows());
  dec.t_o = std::move(basis.basis_rows);
  dec.t_u = std::move(basis.complement_rows);
  dec.t = numkit::vstack({dec.t_o, dec.t_u}, a.cols());

  const Eigen::Index no = dec.t_o.rows();
  const Eigen::Index nu = dec.t_u.rows();
  const Matrix abar = dec.t * a * dec.t.transpose();
  dec.a_o = abar.topLeftCorner(no, no);
  dec.a_r = abar.bottomLeftCorner(nu, no);
  dec.a_u = abar.bottomRightCorner(nu, nu);
  dec.c_o = c_i * dec.t_o.transpose();
  return dec;
}

std::vector<RowVector> scalarization_weights(Eigen::Index outputs, int attempts) {
  std::vector<RowVector> out;
  out.reserve(static_cast<std::size_t>(attempts));
  out.push_back(RowVector::Ones(outputs));
  for (int k = 2; k <= attempts; ++k) {
    RowVector w(outputs);
    for (Eigen::Index r = 0; r < outputs; ++r) w(r) = std::pow(static_cast<double>(k), static_cast<double>(r));
    out.push_back(std::move(w));
  }
  return out;
}

Scalarization scalarize_output(const ObservabilityDecomposition& dec,
                               RankTolerance tol) {
  const Eigen::Index m = dec.c_o.rows();
  if (m == 1) return ScalarOutput{RowVector::Ones(1), dec.c_o.row(0), 1};
  const auto target = dec.observable_dim;
  int attempt = 0;
  for (const auto& w : scalarization_weights(m)) {
    ++attempt;
    const RowVector c_row = w * dec.c_o;
    if (numkit::numerical_rank(observability_matrix(dec.a_o, c_row), tol) == target) {
      return ScalarOutput{w, c_row, attempt};
    }
  }
  return PerRowSplit{};
}

Matrix companion_matrix(const Vector& coefficients) {
  const Eigen::Index n = coefficients.size();
  Matrix a_z = Matrix::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    a_z(r, 0) = coefficients(n - 1 - r);
    if (r + 1 < n) a_z(r, r + 1) = 1.0;
  }
  return a_z;
}

CanonicalForm canonical_form(const ObservabilityDecomposition& dec,
                             const RowVector& c_row) {
  const Eigen::Index n = dec.a_o.rows();
  if (n == 0) throw Error(ErrorCode::NotObservable, "empty observable block");
  if (c_row.size() != n) {
    throw Error(ErrorCode::DimensionMismatch, "canonical form: output row length != n_i");
  }
  const Matrix obs_x = observability_matrix(dec.a_o, c_row);
  const double cond = numkit::condition_number(obs_x);
  if (!(cond <= kCanonicalConditionLimit)) {
    std::ostringstream os;
    os << "scalar pair (A_io, c) is not observable (cond(obsv) = " << cond << ")";
    throw Error(ErrorCode::NotObservable, os.str());
  }

  // Cayley-Hamilton in output form: c A^n = sum_p a_p c A^p.
  RowVector c_an = c_row;
  for (Eigen::Index k = 0; k < n; ++k) c_an = c_an * dec.a_o;
  const Eigen::PartialPivLU<Matrix> lu_t(obs_x.transpose());
  const Vector coefficients = lu_t.solve(c_an.transpose());

  CanonicalForm cf;
  cf.coefficients = coefficients;
  cf.a_z = companion_matrix(coefficients);
  cf.c_row = c_row;
  RowVector e1 = RowVector::Zero(n);
  e1(0) = 1.0;
  const Matrix obs_z = observability_matrix(cf.a_z, e1);
  cf.t_z = Eigen::PartialPivLU<Matrix>(obs_z).solve(obs_x);
  cf.t_alpha = cf.t_z * dec.t_o;
  return cf;
}

}  // namespace ftobs::decomp
