#include "ftobs/numkit.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ftobs {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidMatrix: return "InvalidMatrix";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InsufficientRank: return "InsufficientRank";
    case ErrorCode::NotObservable: return "NotObservable";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::OutOfValidatedRange: return "OutOfValidatedRange";
    case ErrorCode::InvalidSample: return "InvalidSample";
    case ErrorCode::SingularRegressor: return "SingularRegressor";
    case ErrorCode::AssumptionViolated: return "AssumptionViolated";
    case ErrorCode::PlanInconsistent: return "PlanInconsistent";
    case ErrorCode::InvalidScenario: return "InvalidScenario";
    case ErrorCode::DelayBoundViolated: return "DelayBoundViolated";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace ftobs

namespace ftobs::numkit {

namespace {

Eigen::VectorXd singular_values(const Matrix& m) {
  if (m.size() == 0) return {};
  return Eigen::JacobiSVD<Matrix>(m).singularValues();
}

}  // namespace

RankTolerance::RankTolerance(double relative_threshold)
    : threshold_(relative_threshold) {
  if (!(relative_threshold > 0.0 && relative_threshold < 1.0)) {
    std::ostringstream os;
    os << "rank tolerance must lie in (0, 1), got " << relative_threshold;
    throw Error(ErrorCode::DomainError, os.str());
  }
}

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw Error(ErrorCode::InvalidMatrix,
                std::string(what) + " contains non-finite entries");
  }
}

std::size_t numerical_rank(const Matrix& m, RankTolerance tol) {
  require_finite(m, "rank input");
  const Eigen::VectorXd sv = singular_values(m);
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  const double cutoff = tol.relative_threshold() * sv(0);
  return static_cast<std::size_t>((sv.array() >= cutoff).count());
}

Matrix matrix_exponential(const Matrix& m, double t) {
  if (m.rows() != m.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "matrix exponential needs a square matrix");
  }
  require_finite(m, "matrix exponential input");
  if (t == 0.0 || m.size() == 0) return Matrix::Identity(m.rows(), m.cols());
  const Matrix scaled = m * t;
  return scaled.exp();
}

RowBasis orthonormal_row_basis(const Matrix& m, RankTolerance tol) {
  require_finite(m, "row-basis input");
  const Eigen::Index n = m.cols();
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullV);
  const Eigen::VectorXd sv = svd.singularValues();
  Eigen::Index r = 0;
  if (sv.size() > 0 && sv(0) > 0.0) {
    const double cutoff = tol.relative_threshold() * sv(0);
    r = static_cast<Eigen::Index>((sv.array() >= cutoff).count());
  }
  Matrix rows = svd.matrixV().transpose();
  // Sign convention: the largest-magnitude entry of every row is positive.
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    Eigen::Index arg = 0;
    rows.row(i).cwiseAbs().maxCoeff(&arg);
    if (rows(i, arg) < 0.0) rows.row(i) *= -1.0;
  }
  return {rows.topRows(r), rows.bottomRows(n - r)};
}

double smallest_singular_value(const Matrix& m) {
  const Eigen::VectorXd sv = singular_values(m);
  if (sv.size() == 0) return 0.0;
  return sv(sv.size() - 1);
}

double condition_number(const Matrix& m) {
  const Eigen::VectorXd sv = singular_values(m);
  if (sv.size() == 0) return 1.0;
  const double smallest = sv(sv.size() - 1);
  if (smallest == 0.0) return std::numeric_limits<double>::infinity();
  return sv(0) / smallest;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Matrix normalize_rows(const Matrix& m) {
  Matrix out = m;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

Matrix vstack(const std::vector<Matrix>& blocks, Eigen::Index cols) {
  Eigen::Index rows = 0;
  for (const auto& b : blocks) {
    if (b.rows() > 0 && b.cols() != cols) {
      throw Error(ErrorCode::DimensionMismatch, "vstack column count mismatch");
    }
    rows += b.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const auto& b : blocks) {
    if (b.rows() == 0) continue;
    out.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return out;
}

std::vector<std::size_t> greedy_row_select(const Matrix& candidates,
                                           const Matrix& base, std::size_t k) {
  require_finite(candidates, "row-selection candidates");
  require_finite(base, "row-selection base");
  if (base.rows() > 0 && base.cols() != candidates.cols()) {
    throw Error(ErrorCode::DimensionMismatch, "row selection: column counts differ");
  }
  if (k > static_cast<std::size_t>(candidates.rows())) {
    throw Error(ErrorCode::InsufficientRank, "row selection: not enough candidate rows");
  }
  const Matrix pool = normalize_rows(candidates);
  Matrix stack = normalize_rows(base);
  std::vector<std::size_t> picked;
  std::vector<bool> used(static_cast<std::size_t>(pool.rows()), false);
  for (std::size_t round = 0; round < k; ++round) {
    double best_score = -1.0;
    std::size_t best = 0;
    Matrix trial(stack.rows() + 1, pool.cols());
    if (stack.rows() > 0) trial.topRows(stack.rows()) = stack;
    for (Eigen::Index r = 0; r < pool.rows(); ++r) {
      if (used[static_cast<std::size_t>(r)]) continue;
      trial.row(stack.rows()) = pool.row(r);
      const double score = smallest_singular_value(trial);
      if (score > best_score) {
        best_score = score;
        best = static_cast<std::size_t>(r);
      }
    }
    used[best] = true;
    picked.push_back(best);
    stack.conservativeResize(stack.rows() + 1, pool.cols());
    stack.row(stack.rows() - 1) = pool.row(static_cast<Eigen::Index>(best));
  }
  return picked;
}

std::vector<std::size_t> pivoted_row_select(const Matrix& candidates,
                                            const Matrix& base, std::size_t k,
                                            RankTolerance tol) {
  const Eigen::Index n = base.rows() > 0 ? base.cols() : candidates.cols();
  const Matrix combined = vstack({base, candidates}, n);
  if (numerical_rank(normalize_rows(combined), tol) != static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::InsufficientRank,
                "base stacked on candidates does not reach full column rank");
  }
  const std::size_t base_rank =
      base.rows() > 0 ? numerical_rank(normalize_rows(base), tol) : 0;
  if (base_rank + k != static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::DimensionMismatch,
                "row selection: k must equal cols - rank(base)");
  }
  auto picked = greedy_row_select(candidates, base, k);
  const Matrix square = vstack({base, take_rows(candidates, picked)}, n);
  if (numerical_rank(normalize_rows(square), tol) != static_cast<std::size_t>(n)) {
    throw Error(ErrorCode::InsufficientRank, "greedy row selection did not reach full rank");
  }
  return picked;
}

}  // namespace ftobs::numkit
