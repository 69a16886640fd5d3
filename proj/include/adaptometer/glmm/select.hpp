#pragma once

#include <string>
#include <vector>

#include "adaptometer/glmm/laplace.hpp"
#include "adaptometer/glmm/model.hpp"

namespace adaptometer::glmm {

struct SelectionStep {
  std::string removed_term;
  double beta = 0.0;
  double p = 1.0;
};

struct SelectionResult {
  FitResult fit;
  ModelFormula formula;
  std::vector<SelectionStep> trace;
};

/// Backward elimination over interaction terms: refit, drop the interaction
/// with the largest Wald p-value when that p is at least alpha, repeat.
/// Main effects are never candidates, so marginality always holds.
inline SelectionResult backward_select(const std::vector<PrimeSample>& samples, const ModelFormula& full_formula,
                                       double alpha = 0.05, const GlmmOptions& opts = {}) {
  SelectionResult out;
  out.formula = full_formula;
  for (;;) {
    out.fit = fit_glmm(samples, out.formula, opts);
    const TermEstimate* worst = nullptr;
    for (const auto& t : out.fit.terms) {
      if (!is_interaction(t.name) || t.p < alpha) continue;
      if (!worst || t.p > worst->p) worst = &t;
    }
    if (!worst) break;
    out.trace.push_back({worst->name, worst->beta, worst->p});
    std::erase(out.formula.fixed_terms, worst->name);
  }
  return out;
}

}  // namespace adaptometer::glmm
