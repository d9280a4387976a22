#include "nte/glm.hpp"

namespace nte {
namespace detail {

void check_full_rank(const Eigen::MatrixXd& info,
                     const std::vector<std::string>* names) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(info);
  const auto q = info.cols();
  const auto rank = qr.rank();
  if (rank >= q) return;
  const auto perm = qr.colsPermutation().indices();
  std::string cols;
  for (Eigen::Index i = rank; i < q; ++i) {
    const int c = perm[i];
    if (!cols.empty()) cols += ", ";
    if (names && c < static_cast<int>(names->size())) {
      cols += (*names)[static_cast<std::size_t>(c)];
    } else {
      cols += "col " + std::to_string(c);
    }
  }
  throw SingularError("logistic fit: design is rank deficient; dependent "
                      "columns: " +
                      cols);
}

void throw_nonconvergence(const Eigen::VectorXd& coef, double score_inf,
                          int iterations) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "logistic fit: no convergence after %d iterations "
                "(max |score| = %.3e)",
                iterations, score_inf);
  throw ConvergenceError(buf, coef, score_inf);
}

}  // namespace detail

FitResult fit_weighted_logistic(const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& y,
                                const Eigen::VectorXd& w,
                                const GlmOptions& opt) {
  if (X.rows() != y.size() || X.rows() != w.size()) {
    throw ValidationError("logistic fit: X, y, w sizes disagree");
  }
  const int q = static_cast<int>(X.cols());
  const auto n = X.rows();
  return fit_weighted_logistic_stream(
      q,
      [&](auto&& visit) {
        std::vector<double> row(static_cast<std::size_t>(q));
        for (Eigen::Index i = 0; i < n; ++i) {
          for (int c = 0; c < q; ++c) row[static_cast<std::size_t>(c)] = X(i, c);
          visit(row.data(), y[i], w[i]);
        }
      },
      opt);
}

}  // namespace nte
