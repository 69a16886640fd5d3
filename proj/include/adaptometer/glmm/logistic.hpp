#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adaptometer/error.hpp"
#include "adaptometer/glmm/model.hpp"

namespace adaptometer::glmm {

/// Two-sided standard normal tail probability P(|Z| > |z|).
inline double two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

struct TermEstimate {
  std::string name;
  double beta = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

struct VarianceComponent {
  std::string group;
  std::string kind;  ///< "intercept" or "slope:<column>"
  double sd = 0.0;
  bool pinned = false;    ///< held at zero by request
  bool boundary = false;  ///< collapsed onto the lower bound
};

struct FitResult {
  std::vector<TermEstimate> terms;
  std::vector<VarianceComponent> variance_components;
  double loglik = 0.0;
  bool converged = false;
  int iterations = 0;
  /// Maximum absolute gradient entry of the objective at the returned point
  /// (bound-active variance parameters excluded).
  double gradient_max_norm = 0.0;
  std::vector<double> loglik_trace;
  std::string message;

  const TermEstimate& term(std::string_view name) const {
    for (const auto& t : terms)
      if (t.name == name) return t;
    throw DataError("fit has no term '" + std::string(name) + "'");
  }
  bool has_term(std::string_view name) const {
    for (const auto& t : terms)
      if (t.name == name) return true;
    return false;
  }
};

inline TermEstimate make_estimate(std::string name, double beta, double se) {
  TermEstimate t;
  t.name = std::move(name);
  t.beta = beta;
  t.se = se;
  t.z = se > 0 ? beta / se : 0.0;
  t.p = two_sided_p(t.z);
  return t;
}

namespace detail {

inline double sigmoid(double eta) {
  if (eta >= 0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

/// log(1 + exp(eta)) without overflow.
inline double softplus(double eta) {
  return eta > 0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
}

inline double bernoulli_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& eta) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) ll += y(i) * eta(i) - softplus(eta(i));
  return ll;
}

}  // namespace detail

struct LogisticOptions {
  int max_iter = 100;
  double score_tol = 1e-8;
  double rel_loglik_tol = 1e-10;
  /// |eta| beyond this during the iterations means fitted probabilities of
  /// numerically 0 or 1.
  double separation_eta = 36.0;
  /// |eta| beyond this at the optimum means the likelihood only converged
  /// because it flattened out along a diverging direction.
  double saturation_eta = 20.0;
};

/// Maximum-likelihood logistic regression by iteratively reweighted least
/// squares (Newton on the Bernoulli log-likelihood) with step halving so the
/// log-likelihood never decreases. Standard errors come from the inverse
/// Fisher information at the optimum.
inline FitResult fit_logistic(const DesignMatrix& design, const LogisticOptions& opts = {}) {
  const Eigen::MatrixXd& x = design.x;
  const Eigen::VectorXd& y = design.y;
  const Eigen::Index n = x.rows(), p = x.cols();
  if (n == 0) throw DataError("logistic fit needs at least one row");
  for (Eigen::Index i = 0; i < n; ++i)
    if (y(i) != 0.0 && y(i) != 1.0) throw DataError("logistic response must be 0/1");

  FitResult fit;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd eta = x * beta;
  double ll = detail::bernoulli_loglik(y, eta);
  fit.loglik_trace.push_back(ll);

  Eigen::VectorXd mu(n), w(n);
  Eigen::LLT<Eigen::MatrixXd> llt;
  auto refresh = [&] {
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = detail::sigmoid(eta(i));
      w(i) = mu(i) * (1.0 - mu(i));
    }
    Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
    llt.compute(info);
    if (llt.info() != Eigen::Success || llt.rcond() < 1e-13)
      throw NumericalError("singular information matrix in logistic fit");
  };

  refresh();
  for (int iter = 1; iter <= opts.max_iter; ++iter) {
    Eigen::VectorXd score = x.transpose() * (y - mu);
    if (score.cwiseAbs().maxCoeff() < opts.score_tol) {
      fit.converged = true;
      break;
    }
    Eigen::VectorXd step = llt.solve(score);
    double t = 1.0;
    Eigen::VectorXd next_beta, next_eta;
    double next_ll = -std::numeric_limits<double>::infinity();
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      next_beta = beta + t * step;
      next_eta = x * next_beta;
      next_ll = detail::bernoulli_loglik(y, next_eta);
      if (next_ll >= ll) break;
    }
    if (!(next_ll >= ll)) {
      // No ascent possible at machine precision: already at the optimum.
      fit.converged = score.cwiseAbs().maxCoeff() < 1e-6 * std::max(1.0, std::abs(ll));
      break;
    }
    fit.iterations = iter;
    const double change = std::abs(next_ll - ll) / std::max(1.0, std::abs(ll));
    beta = next_beta;
    eta = next_eta;
    ll = next_ll;
    fit.loglik_trace.push_back(ll);
    if (eta.cwiseAbs().maxCoeff() > opts.separation_eta)
      throw NumericalError("complete separation: fitted probabilities numerically 0 or 1 (coefficient norm " +
                           std::to_string(beta.norm()) + " diverging)");
    refresh();
    if (change < opts.rel_loglik_tol) {
      fit.converged = true;
      break;
    }
  }

  if (eta.cwiseAbs().maxCoeff() > opts.saturation_eta)
    throw NumericalError("complete or quasi-complete separation: fitted probabilities numerically 0 or 1");

  Eigen::VectorXd score = x.transpose() * (y - mu);
  fit.gradient_max_norm = p ? score.cwiseAbs().maxCoeff() : 0.0;
  fit.loglik = ll;
  Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p, p));
  for (Eigen::Index j = 0; j < p; ++j)
    fit.terms.push_back(make_estimate(design.column_names[static_cast<std::size_t>(j)], beta(j), std::sqrt(cov(j, j))));
  if (!fit.converged) fit.message = "IRLS did not converge within " + std::to_string(opts.max_iter) + " iterations";
  return fit;
}

}  // namespace adaptometer::glmm
