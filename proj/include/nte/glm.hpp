#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nte/common.hpp"
#include "nte/stats.hpp"

namespace nte {

struct FitResult {
  Eigen::VectorXd coef;
  bool converged = false;
  int iterations = 0;
  double max_abs_score = 0.0;
  Eigen::MatrixXd info;  // X' diag(w p (1-p)) X at the solution
};

struct ConvergenceError : Error {
  ConvergenceError(const std::string& msg, Eigen::VectorXd last,
                   double score_inf)
      : Error(msg), last_coef(std::move(last)), max_abs_score(score_inf) {}
  Eigen::VectorXd last_coef;
  double max_abs_score;
};

struct GlmOptions {
  int max_iter = 100;
  double score_tol_rel = 1e-8;  // vs total weight
  double coef_tol = 1e-10;
  double coef_bound = 30.0;  // |coef| beyond this flags separation
  std::optional<Eigen::VectorXd> start;
  const std::vector<std::string>* column_names = nullptr;
};

namespace detail {

void check_full_rank(const Eigen::MatrixXd& info,
                     const std::vector<std::string>* names);

[[noreturn]] void throw_nonconvergence(const Eigen::VectorXd& coef,
                                       double score_inf, int iterations);

}  // namespace detail

// Newton/IRLS fit of a weighted logistic regression streamed row by row.
// `for_each_row(visit)` must call visit(const double* x, double y, double w)
// for every observation; it may be invoked several times per iteration.
// Deterministic; throws SingularError / SeparationError / ConvergenceError.
template <class ForEachRow>
FitResult fit_weighted_logistic_stream(int q, ForEachRow&& for_each_row,
                                       const GlmOptions& opt = {}) {
  if (q <= 0) throw ValidationError("logistic fit: no columns");
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  if (opt.start && opt.start->size() == q) beta = *opt.start;

  Eigen::VectorXd score(q);
  Eigen::MatrixXd info(q, q);
  double total_weight = 0.0;
  double loglik = 0.0;

  // One pass: weighted log-likelihood, score, and information at `b`.
  auto evaluate = [&](const Eigen::VectorXd& b) {
    score.setZero();
    info.setZero();
    total_weight = 0.0;
    loglik = 0.0;
    double* s = score.data();
    double* im = info.data();
    const double* bp = b.data();
    for_each_row([&](const double* x, double y, double w) {
      double eta = 0.0;
      for (int c = 0; c < q; ++c) eta += bp[c] * x[c];
      const double p = expit(eta);
      loglik += w * (y * eta - log1pexp(eta));
      total_weight += w;
      const double resid = w * (y - p);
      const double curv = w * p * (1.0 - p);
      for (int c = 0; c < q; ++c) {
        s[c] += resid * x[c];
        const double cx = curv * x[c];
        double* col = im + static_cast<std::ptrdiff_t>(c) * q;
        for (int r = 0; r <= c; ++r) col[r] += cx * x[r];
      }
    });
    for (int c = 0; c < q; ++c)
      for (int r = c + 1; r < q; ++r) info(r, c) = info(c, r);
  };

  evaluate(beta);
  if (total_weight <= 0.0) throw ValidationError("logistic fit: no rows");
  detail::check_full_rank(info, opt.column_names);

  FitResult out;
  double prev_loglik = loglik;
  Eigen::VectorXd step(q);
  for (int it = 1; it <= opt.max_iter; ++it) {
    const double score_inf = score.lpNorm<Eigen::Infinity>();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) {
      detail::check_full_rank(info, opt.column_names);
      throw SingularError("logistic fit: information matrix not factorizable");
    }
    step = ldlt.solve(score);
    if (!step.allFinite()) {
      throw SingularError("logistic fit: Newton step not finite");
    }
    if (score_inf <= opt.score_tol_rel * total_weight &&
        step.lpNorm<Eigen::Infinity>() <= opt.coef_tol) {
      beta += step;  // final polish; moves < coef_tol
      evaluate(beta);
      out.coef = beta;
      out.converged = true;
      out.iterations = it;
      out.max_abs_score = score.lpNorm<Eigen::Infinity>();
      out.info = info;
      return out;
    }

    // Newton update with step-halving on the weighted log-likelihood.
    const Eigen::VectorXd beta_old = beta;
    double scale = 1.0;
    int halvings = 0;
    for (;;) {
      beta = beta_old + scale * step;
      evaluate(beta);
      if (loglik >= prev_loglik - 1e-12 * (std::fabs(prev_loglik) + 1.0)) {
        break;
      }
      if (++halvings > 30) {
        detail::throw_nonconvergence(beta, score.lpNorm<Eigen::Infinity>(),
                                     it);
      }
      scale *= 0.5;
    }
    prev_loglik = loglik;
    if (beta.lpNorm<Eigen::Infinity>() > opt.coef_bound) {
      throw SeparationError(
          "logistic fit: coefficients diverging (|coef| > 30); outcome is "
          "likely separated or degenerate");
    }
  }
  detail::throw_nonconvergence(beta, score.lpNorm<Eigen::Infinity>(),
                               opt.max_iter);
}

// Dense-matrix convenience overload.
FitResult fit_weighted_logistic(const Eigen::MatrixXd& X,
                                const Eigen::VectorXd& y,
                                const Eigen::VectorXd& w,
                                const GlmOptions& opt = {});

inline double predict_prob(const FitResult& fit, const Eigen::VectorXd& x) {
  return expit(fit.coef.dot(x));
}

}  // namespace nte
