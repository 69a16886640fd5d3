#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adaptometer/glmm/logistic.hpp"
#include "adaptometer/glmm/model.hpp"
#include "adaptometer/glmm/select.hpp"
#include "adaptometer/util/io.hpp"

namespace adaptometer::glmm {

/// Fit report as ordered JSON:
/// {terms: [{name, beta, se, z, p}], variance_components: [{group, kind, sd}],
///  loglik, converged, iterations, selection_trace?}
inline nlohmann::ordered_json wald_report_json(const FitResult& fit, const std::vector<SelectionStep>* trace = nullptr) {
  using nlohmann::ordered_json;
  ordered_json j;
  ordered_json terms = ordered_json::array();
  for (const auto& t : fit.terms)
    terms.push_back({{"name", t.name}, {"beta", t.beta}, {"se", t.se}, {"z", t.z}, {"p", t.p}});
  j["terms"] = std::move(terms);
  ordered_json vcs = ordered_json::array();
  for (const auto& v : fit.variance_components) {
    ordered_json c = {{"group", v.group}, {"kind", v.kind}, {"sd", v.sd}};
    if (v.pinned) c["pinned"] = true;
    if (v.boundary) c["boundary"] = true;
    vcs.push_back(std::move(c));
  }
  j["variance_components"] = std::move(vcs);
  j["loglik"] = fit.loglik;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["gradient_max_norm"] = fit.gradient_max_norm;
  if (!fit.message.empty()) j["message"] = fit.message;
  if (trace) {
    ordered_json steps = ordered_json::array();
    for (const auto& s : *trace) steps.push_back({{"removed", s.removed_term}, {"beta", s.beta}, {"p", s.p}});
    j["selection_trace"] = std::move(steps);
  }
  return j;
}

/// Aligned text table with the columns β, SE, z, p>|z| in design order.
inline std::string wald_report_text(const FitResult& fit) {
  std::vector<std::string> labels;
  std::size_t width = 4;
  for (const auto& t : fit.terms) {
    labels.push_back(pretty_term(t.name));
    width = std::max(width, labels.back().size());
  }
  auto pad_left = [](std::string s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };
  auto pad_right = [](std::string s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  std::string out = pad_right("", width) + pad_left("β", 11) + pad_left("SE", 10) + pad_left("z", 10) + pad_left("p>|z|", 9) + "\n";
  for (std::size_t i = 0; i < fit.terms.size(); ++i) {
    const auto& t = fit.terms[i];
    out += pad_right(labels[i], width) + pad_left(util::format_fixed(t.beta, 3), 10) +
           pad_left(util::format_fixed(t.se, 3), 10) + pad_left(util::format_fixed(t.z, 1), 10) +
           pad_left(util::format_fixed(t.p, 3), 9) + "\n";
  }
  for (const auto& v : fit.variance_components) {
    out += "sd(" + v.group + ", " + v.kind + ") = " + util::format_fixed(v.sd, 4);
    if (v.pinned) out += " [pinned]";
    if (v.boundary) out += " [boundary]";
    out += "\n";
  }
  out += "loglik = " + util::format_fixed(fit.loglik, 3) + (fit.converged ? ", converged" : ", NOT converged") +
         " after " + std::to_string(fit.iterations) + " iterations\n";
  return out;
}

}  // namespace adaptometer::glmm
