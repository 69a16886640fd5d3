#pragma once

// Mixed-effects logistic regression by maximizing the Laplace approximation of
// the marginal likelihood.
//
// Random effects are written b = Λ ε with ε ~ N(0, I) and Λ = diag(σ), one σ
// per variance component. Because every random term is nested in the same
// outer factor (the conversation), the random effects split into independent
// per-conversation blocks and the approximation factorizes:
//
//   F(β, θ) = Σ_blocks [ ℓ(y | Xβ + ZΛε̂) − ½‖ε̂‖² − ½ log det(I + ΛZᵀWZΛ) ]
//
// with ε̂ the conditional mode of each block and θ = log σ. The gradient below
// is the total derivative including the dependence of ε̂ and W on (β, θ).

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "adaptometer/error.hpp"
#include "adaptometer/glmm/logistic.hpp"
#include "adaptometer/glmm/model.hpp"
#include "adaptometer/util/parallel.hpp"

namespace adaptometer::glmm {

struct GlmmOptions {
  /// Outer iterations (quasi-Newton plus Newton polishing steps).
  int max_iter = 200;
  /// Convergence: max |gradient| of the Laplace objective.
  double gtol = 1e-6;
  /// Hold every variance component at exactly zero.
  bool pin_all_variances = false;
  /// Components held at zero, written "group/kind", e.g. "conv_id/slope:ln_freq".
  std::vector<std::string> pinned;
  double initial_log_sd = std::log(0.5);
  /// Log-sd values at this bound are reported as boundary fits.
  double log_sd_lower = -8.0;
  double inner_tol = 1e-10;
  unsigned threads = 1;
};

inline std::string component_label(const VarianceComponent& c) { return c.group + "/" + c.kind; }

class LaplaceObjective {
 public:
  LaplaceObjective(const DesignMatrix& design, const GlmmOptions& opts)
      : p_(design.x.cols()), inner_tol_(opts.inner_tol), threads_(opts.threads) {
    if (design.rows() == 0) throw DataError("mixed model needs at least one row");

    // Variance components in formula order.
    std::vector<std::vector<int>> comp_of_coef;  // per grouping: coefficient -> free index or -1
    for (const auto& g : design.groupings) {
      if (g.levels.size() < 2)
        throw DataError("grouping factor " + g.term.group_name() + " needs at least 2 groups (has " +
                        std::to_string(g.levels.size()) + ")");
      std::vector<int> coefs;
      auto add = [&](std::string kind) {
        VarianceComponent vc;
        vc.group = g.term.group_name();
        vc.kind = std::move(kind);
        vc.pinned = opts.pin_all_variances ||
                    std::find(opts.pinned.begin(), opts.pinned.end(), component_label(vc)) != opts.pinned.end();
        coefs.push_back(vc.pinned ? -1 : static_cast<int>(free_.size()));
        if (!vc.pinned) free_.push_back(components_.size());
        components_.push_back(std::move(vc));
      };
      if (g.term.intercept) add("intercept");
      for (const auto& s : g.term.slopes) add("slope:" + s);
      comp_of_coef.push_back(std::move(coefs));
    }

    // Rows grouped by the outer factor (first path element), in order of
    // first appearance.
    const Eigen::Index n = design.rows();
    std::vector<int> block_of_row(static_cast<std::size_t>(n), 0);
    int n_blocks = 1;
    if (!design.groupings.empty()) {
      std::map<std::string, int> outer;
      const auto& g0 = design.groupings.front();
      for (Eigen::Index i = 0; i < n; ++i) {
        const std::string& key = g0.levels[static_cast<std::size_t>(g0.level_of_row[static_cast<std::size_t>(i)])];
        auto [it, fresh] = outer.try_emplace(key.substr(0, key.find('\x1f')), static_cast<int>(outer.size()));
        block_of_row[static_cast<std::size_t>(i)] = it->second;
      }
      n_blocks = static_cast<int>(outer.size());
    }
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(n_blocks));
    for (Eigen::Index i = 0; i < n; ++i) rows[static_cast<std::size_t>(block_of_row[static_cast<std::size_t>(i)])].push_back(i);

    blocks_.resize(rows.size());
    for (std::size_t b = 0; b < rows.size(); ++b) {
      Block& blk = blocks_[b];
      const auto nb = static_cast<Eigen::Index>(rows[b].size());
      blk.x.resize(nb, p_);
      blk.y.resize(nb);
      for (Eigen::Index r = 0; r < nb; ++r) {
        blk.x.row(r) = design.x.row(rows[b][static_cast<std::size_t>(r)]);
        blk.y(r) = design.y(rows[b][static_cast<std::size_t>(r)]);
      }
      // Columns: per grouping, per level present in the block, per free coefficient.
      std::vector<std::map<int, Eigen::Index>> level_col(design.groupings.size());
      Eigen::Index q = 0;
      for (std::size_t t = 0; t < design.groupings.size(); ++t) {
        const auto& g = design.groupings[t];
        const auto n_free = static_cast<Eigen::Index>(
            std::count_if(comp_of_coef[t].begin(), comp_of_coef[t].end(), [](int c) { return c >= 0; }));
        if (n_free == 0) continue;
        for (Eigen::Index r = 0; r < nb; ++r) {
          int level = g.level_of_row[static_cast<std::size_t>(rows[b][static_cast<std::size_t>(r)])];
          if (level_col[t].try_emplace(level, q).second) {
            for (int c : comp_of_coef[t])
              if (c >= 0) blk.comp_of_col.push_back(c);
            q += n_free;
          }
        }
      }
      blk.z = Eigen::MatrixXd::Zero(nb, q);
      for (std::size_t t = 0; t < design.groupings.size(); ++t) {
        const auto& g = design.groupings[t];
        for (Eigen::Index r = 0; r < nb; ++r) {
          const Eigen::Index row = rows[b][static_cast<std::size_t>(r)];
          auto it = level_col[t].find(g.level_of_row[static_cast<std::size_t>(row)]);
          if (it == level_col[t].end()) continue;
          Eigen::Index col = it->second;
          std::size_t coef = 0;
          if (g.term.intercept) {
            if (comp_of_coef[t][coef] >= 0) blk.z(r, col++) = 1.0;
            ++coef;
          }
          for (Eigen::Index s = 0; s < g.slope_values.cols(); ++s, ++coef)
            if (comp_of_coef[t][coef] >= 0) blk.z(r, col++) = g.slope_values(row, s);
        }
      }
      blk.mode = Eigen::VectorXd::Zero(q);
    }
  }

  Eigen::Index num_fixed() const { return p_; }
  Eigen::Index num_free_components() const { return static_cast<Eigen::Index>(free_.size()); }
  Eigen::Index num_params() const { return p_ + num_free_components(); }
  std::size_t num_blocks() const { return blocks_.size(); }
  const std::vector<VarianceComponent>& components() const { return components_; }
  /// Index into components() of each free parameter.
  const std::vector<std::size_t>& free_components() const { return free_; }

  /// Laplace log marginal likelihood at params = [β; log σ of free
  /// components]. Fills `grad` with the total derivative when non-null.
  double evaluate(const Eigen::VectorXd& params, Eigen::VectorXd* grad) {
    double total = evaluate_once(params, grad);
    if (!std::isfinite(total)) {
      // A wild earlier point can leave warm starts unusable; retry cold.
      for (auto& blk : blocks_) blk.mode.setZero();
      total = evaluate_once(params, grad);
    }
    if (!std::isfinite(total)) throw NumericalError("Laplace objective is not finite");
    return total;
  }

 private:
  double evaluate_once(const Eigen::VectorXd& params, Eigen::VectorXd* grad) {
    const Eigen::VectorXd beta = params.head(p_);
    const Eigen::VectorXd sigma = params.tail(num_free_components()).array().exp();
    const std::size_t nb = blocks_.size();
    std::vector<double> values(nb);
    std::vector<Eigen::VectorXd> grads(grad ? nb : 0);
    util::parallel_for(nb, threads_, [&](std::size_t b) {
      values[b] = evaluate_block(blocks_[b], beta, sigma, grad ? &grads[b] : nullptr);
    });
    double total = 0.0;
    for (double v : values) total += v;
    if (grad) {
      grad->setZero(num_params());
      for (const auto& g : grads) *grad += g;
    }
    return total;
  }

  struct Block {
    Eigen::MatrixXd x;
    Eigen::VectorXd y;
    Eigen::MatrixXd z;
    std::vector<int> comp_of_col;  ///< free component of each column
    Eigen::VectorXd mode;          ///< warm start for the inner Newton solve
  };

  double evaluate_block(Block& blk, const Eigen::VectorXd& beta, const Eigen::VectorXd& sigma,
                        Eigen::VectorXd* grad) const {
    const Eigen::Index n = blk.x.rows(), q = blk.z.cols(), k = sigma.size();
    const Eigen::VectorXd offset = blk.x * beta;
    Eigen::MatrixXd m = blk.z;
    for (Eigen::Index j = 0; j < q; ++j) m.col(j) *= sigma(blk.comp_of_col[static_cast<std::size_t>(j)]);

    Eigen::VectorXd eps = blk.mode;
    Eigen::VectorXd eta(n), mu(n), w(n);
    auto fill = [&](const Eigen::VectorXd& e) {
      eta = offset + m * e;
      for (Eigen::Index i = 0; i < n; ++i) {
        mu(i) = detail::sigmoid(eta(i));
        w(i) = mu(i) * (1.0 - mu(i));
      }
    };
    auto inner_objective = [&](const Eigen::VectorXd& e) {
      Eigen::VectorXd et = offset + m * e;
      return detail::bernoulli_loglik(blk.y, et) - 0.5 * e.squaredNorm();
    };

    Eigen::LLT<Eigen::MatrixXd> llt;
    Eigen::MatrixXd h(q, q);
    fill(eps);
    for (int it = 0; it < 100 && q > 0; ++it) {
      Eigen::VectorXd g = m.transpose() * (blk.y - mu) - eps;
      if (g.cwiseAbs().maxCoeff() < inner_tol_) break;
      h.noalias() = m.transpose() * w.asDiagonal() * m;
      h.diagonal().array() += 1.0;
      llt.compute(h);
      Eigen::VectorXd step = llt.solve(g);
      const double f0 = inner_objective(eps);
      // Changes at rounding level count as no decrease.
      const double slack = 1e-13 * (1.0 + std::abs(f0));
      double t = 1.0;
      Eigen::VectorXd next = eps + step;
      int halving = 0;
      for (; halving < 30 && inner_objective(next) < f0 - slack; ++halving) {
        t *= 0.5;
        next = eps + t * step;
      }
      if (halving == 30) break;
      eps = next;
      fill(eps);
      if (t * step.cwiseAbs().maxCoeff() < 1e-14 * (1.0 + eps.cwiseAbs().maxCoeff())) break;
    }
    blk.mode = eps;

    const Eigen::VectorXd r = blk.y - mu;
    double value = detail::bernoulli_loglik(blk.y, eta) - 0.5 * eps.squaredNorm();
    if (q == 0) {
      if (grad) {
        grad->setZero(p_ + k);
        grad->head(p_) = blk.x.transpose() * r;
      }
      return value;
    }
    h.noalias() = m.transpose() * w.asDiagonal() * m;
    h.diagonal().array() += 1.0;
    llt.compute(h);
    const Eigen::MatrixXd l = llt.matrixL();
    value -= l.diagonal().array().log().sum();  // ½ log det H
    if (!grad) return value;

    const Eigen::MatrixXd h_inv = llt.solve(Eigen::MatrixXd::Identity(q, q));
    const Eigen::MatrixXd m_hinv = m * h_inv;
    // a_i = h_i w'_i with h_i = m_iᵀ H⁻¹ m_i and w' = dW/dη.
    Eigen::VectorXd a(n);
    for (Eigen::Index i = 0; i < n; ++i) a(i) = m_hinv.row(i).dot(m.row(i)) * w(i) * (1.0 - 2.0 * mu(i));

    grad->setZero(p_ + k);
    // β: direct score plus the log-det term through η = Xβ + M ε̂(β).
    const Eigen::MatrixXd c = h_inv * (m.transpose() * w.asDiagonal() * blk.x);
    grad->head(p_) = blk.x.transpose() * (r - 0.5 * a) + 0.5 * c.transpose() * (m.transpose() * a);

    // log σ of each free component present in the block.
    const Eigen::VectorXd mt_r = m.transpose() * r;
    for (Eigen::Index comp = 0; comp < k; ++comp) {
      Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
      Eigen::VectorXd s = Eigen::VectorXd::Zero(q);
      double trace_term = 0.0;
      bool present = false;
      for (Eigen::Index j = 0; j < q; ++j) {
        if (blk.comp_of_col[static_cast<std::size_t>(j)] != comp) continue;
        present = true;
        d += m.col(j) * eps(j);
        s(j) = mt_r(j);
        trace_term += 2.0 * (1.0 - h_inv(j, j));
      }
      if (!present) continue;
      s -= m.transpose() * w.cwiseProduct(d);
      const Eigen::VectorXd deta = d + m * (h_inv * s);
      (*grad)(p_ + comp) = r.dot(d) - 0.5 * (trace_term + a.dot(deta));
    }
    return value;
  }

  Eigen::Index p_;
  double inner_tol_;
  unsigned threads_;
  std::vector<VarianceComponent> components_;
  std::vector<std::size_t> free_;
  std::vector<Block> blocks_;
};

namespace detail {

/// Central differences of an analytic gradient; returns the symmetrized
/// Hessian of the objective.
template <typename Fn>
Eigen::MatrixXd fd_hessian(Fn&& gradient, const Eigen::VectorXd& x, double step = 1e-4) {
  const Eigen::Index d = x.size();
  Eigen::MatrixXd hess(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double h = step * std::max(1.0, std::abs(x(j)));
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += h;
    xm(j) -= h;
    hess.col(j) = (gradient(xp) - gradient(xm)) / (2.0 * h);
  }
  return 0.5 * (hess + hess.transpose());
}

}  // namespace detail

/// Fits the mixed model on a prepared design. Fixed effects start from the
/// plain logistic fit and every free log-sd from opts.initial_log_sd.
inline FitResult fit_glmm(const DesignMatrix& design, const GlmmOptions& opts = {}) {
  LaplaceObjective objective(design, opts);
  const Eigen::Index p = objective.num_fixed();
  const Eigen::Index k = objective.num_free_components();
  const Eigen::Index dim = p + k;

  const FitResult start = fit_logistic(design);
  Eigen::VectorXd x(dim);
  for (Eigen::Index j = 0; j < p; ++j) x(j) = start.terms[static_cast<std::size_t>(j)].beta;
  x.tail(k).setConstant(opts.initial_log_sd);

  Eigen::VectorXd lower = Eigen::VectorXd::Constant(dim, -std::numeric_limits<double>::infinity());
  lower.tail(k).setConstant(opts.log_sd_lower);

  // Minimize the negative Laplace objective.
  auto fun = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    double f = objective.evaluate(v, &g);
    g = -g;
    return -f;
  };
  // Trial points that overflow count as rejected steps.
  auto trial = [&](const Eigen::VectorXd& v, Eigen::VectorXd& g) {
    try {
      return fun(v, g);
    } catch (const NumericalError&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  auto gradient_only = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd g;
    fun(v, g);
    return g;
  };
  auto at_bound = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& g, Eigen::Index i) {
    return v(i) <= lower(i) + 1e-12 && g(i) > 0;
  };
  auto projected = [&](const Eigen::VectorXd& v, const Eigen::VectorXd& g) {
    Eigen::VectorXd pg = g;
    for (Eigen::Index i = 0; i < dim; ++i)
      if (at_bound(v, g, i)) pg(i) = 0.0;
    return pg;
  };
  auto max_abs = [](const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; };

  FitResult fit;
  Eigen::VectorXd g;
  double f = fun(x, g);
  fit.loglik_trace.push_back(-f);
  int iter = 0;

  // Inverse Hessian seed: finite-difference curvature when positive
  // definite, else the logistic covariance for β and a unit scale for θ.
  Eigen::MatrixXd inv_h = Eigen::MatrixXd::Identity(dim, dim);
  {
    Eigen::MatrixXd hess = detail::fd_hessian(gradient_only, x);
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    if (llt.info() == Eigen::Success) {
      inv_h = llt.solve(Eigen::MatrixXd::Identity(dim, dim));
    } else {
      for (Eigen::Index j = 0; j < p; ++j) {
        const double se = start.terms[static_cast<std::size_t>(j)].se;
        inv_h(j, j) = se * se;
      }
      for (Eigen::Index j = p; j < dim; ++j) inv_h(j, j) = 1.0 / std::max<double>(1.0, objective.num_blocks());
    }
  }
  const Eigen::MatrixXd inv_h0 = inv_h;

  // Quasi-Newton (BFGS) with projection onto the log-sd lower bound.
  const double bfgs_tol = std::max(opts.gtol, 1e-5);
  while (iter < opts.max_iter) {
    Eigen::VectorXd pg = projected(x, g);
    if (max_abs(pg) < bfgs_tol) break;
    Eigen::VectorXd dir = -(inv_h * pg);
    for (Eigen::Index i = 0; i < dim; ++i)
      if (at_bound(x, g, i)) dir(i) = 0.0;
    if (pg.dot(dir) >= 0) {
      inv_h = inv_h0;
      dir = -(inv_h * pg);
      for (Eigen::Index i = 0; i < dim; ++i)
        if (at_bound(x, g, i)) dir(i) = 0.0;
    }
    double t = 1.0;
    Eigen::VectorXd xn, gn;
    double fn = 0.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
      xn = (x + t * dir).cwiseMax(lower);
      fn = trial(xn, gn);
      if (fn <= f + 1e-4 * g.dot(xn - x)) {
        accepted = true;
        break;
      }
    }
    ++iter;
    if (!accepted) break;  // Newton polishing takes over
    const Eigen::VectorXd s = xn - x, y = gn - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd e = Eigen::MatrixXd::Identity(dim, dim) - rho * s * y.transpose();
      inv_h = e * inv_h * e.transpose() + rho * s * s.transpose();
    }
    x = xn;
    g = gn;
    f = fn;
    fit.loglik_trace.push_back(-f);
  }

  // Newton polishing with a finite-difference Hessian of the analytic
  // gradient; the last Hessian also yields the Wald covariance.
  Eigen::MatrixXd hess;
  std::vector<Eigen::Index> free_idx;
  for (;;) {
    hess = detail::fd_hessian(gradient_only, x);
    free_idx.clear();
    for (Eigen::Index i = 0; i < dim; ++i)
      if (!at_bound(x, g, i)) free_idx.push_back(i);
    const Eigen::VectorXd pg = projected(x, g);
    if (max_abs(pg) < opts.gtol || iter >= opts.max_iter) break;
    const auto nf = static_cast<Eigen::Index>(free_idx.size());
    Eigen::MatrixXd hf(nf, nf);
    Eigen::VectorXd gf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      gf(a) = g(free_idx[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < nf; ++b)
        hf(a, b) = hess(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hf);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) break;
    const Eigen::VectorXd delta = ldlt.solve(-gf);
    ++iter;
    bool improved = false;
    for (double t = 1.0; t > 1e-3; t *= 0.5) {
      Eigen::VectorXd xn = x;
      for (Eigen::Index a = 0; a < nf; ++a) xn(free_idx[static_cast<std::size_t>(a)]) += t * delta(a);
      xn = xn.cwiseMax(lower);
      Eigen::VectorXd gn;
      const double fn = trial(xn, gn);
      if (std::isfinite(fn) && max_abs(projected(xn, gn)) < max_abs(pg) && fn <= f + 1e-9 * std::max(1.0, std::abs(f))) {
        x = xn;
        g = gn;
        f = fn;
        improved = true;
        break;
      }
    }
    fit.loglik_trace.push_back(-f);
    if (!improved) break;
  }

  fit.iterations = iter;
  fit.loglik = -f;
  fit.gradient_max_norm = max_abs(projected(x, g));
  fit.converged = fit.gradient_max_norm < opts.gtol;
  if (!fit.converged)
    fit.message = "outer optimization stopped after " + std::to_string(iter) +
                  " iterations with max |gradient| = " + std::to_string(fit.gradient_max_norm);

  // Wald covariance from the curvature over the parameters off the bound.
  free_idx.clear();
  for (Eigen::Index i = 0; i < dim; ++i)
    if (!(x(i) <= lower(i) + 1e-12)) free_idx.push_back(i);
  const auto nf = static_cast<Eigen::Index>(free_idx.size());
  Eigen::MatrixXd hf(nf, nf);
  for (Eigen::Index a = 0; a < nf; ++a)
    for (Eigen::Index b = 0; b < nf; ++b)
      hf(a, b) = hess(free_idx[static_cast<std::size_t>(a)], free_idx[static_cast<std::size_t>(b)]);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(hf);
  Eigen::VectorXd var_beta(p);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
    const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(nf, nf));
    for (Eigen::Index j = 0; j < p; ++j) var_beta(j) = cov(j, j);  // β are the leading free entries
  } else {
    Eigen::LDLT<Eigen::MatrixXd> beta_only(hess.topLeftCorner(p, p));
    if (beta_only.info() != Eigen::Success || !beta_only.isPositive())
      throw NumericalError("Laplace curvature is not positive definite at the optimum");
    var_beta = beta_only.solve(Eigen::MatrixXd::Identity(p, p)).diagonal();
    fit.message += (fit.message.empty() ? "" : "; ") + std::string("variance-parameter curvature singular, SE conditional on variances");
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    if (!(var_beta(j) > 0)) throw NumericalError("non-positive variance for " + design.column_names[static_cast<std::size_t>(j)]);
    fit.terms.push_back(make_estimate(design.column_names[static_cast<std::size_t>(j)], x(j), std::sqrt(var_beta(j))));
  }

  fit.variance_components = objective.components();
  const auto& free = objective.free_components();
  for (std::size_t c = 0; c < free.size(); ++c) {
    const double log_sd = x(p + static_cast<Eigen::Index>(c));
    auto& vc = fit.variance_components[free[c]];
    vc.sd = std::exp(log_sd);
    vc.boundary = log_sd <= opts.log_sd_lower + 1e-9;
  }
  return fit;
}

inline FitResult fit_glmm(const std::vector<PrimeSample>& samples, const ModelFormula& formula,
                          const GlmmOptions& opts = {}) {
  return fit_glmm(build_design(samples, formula), opts);
}

}  // namespace adaptometer::glmm
