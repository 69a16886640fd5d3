#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "adaptometer/glmm.hpp"

using namespace adaptometer;
using namespace adaptometer::glmm;

namespace {

std::vector<PrimeSample> load_logistic50() {
  std::ifstream in(std::string(ADAPTOMETER_TEST_DATA) + "/logistic50.csv");
  return read_samples_csv(in);
}

// Independent dense Newton-Raphson for the logistic MLE, no Eigen.
struct DenseFit {
  std::vector<double> beta, se;
  double loglik = 0;
};

std::vector<double> solve(std::vector<std::vector<double>> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a[i][k]) > std::abs(a[piv][k])) piv = i;
    std::swap(a[k], a[piv]);
    std::swap(b[k], b[piv]);
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a[i][k] / a[k][k];
      for (std::size_t j = k; j < n; ++j) a[i][j] -= f * a[k][j];
      b[i] -= f * b[k];
    }
  }
  std::vector<double> x(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a[k][j] * x[j];
    x[k] = s / a[k][k];
  }
  return x;
}

DenseFit dense_newton(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
  const std::size_t n = y.size(), p = x[0].size();
  std::vector<double> beta(p, 0.0);
  std::vector<std::vector<double>> info;
  for (int it = 0; it < 50; ++it) {
    std::vector<double> score(p, 0.0);
    info.assign(p, std::vector<double>(p, 0.0));
    for (std::size_t i = 0; i < n; ++i) {
      double eta = 0;
      for (std::size_t j = 0; j < p; ++j) eta += x[i][j] * beta[j];
      const double mu = 1.0 / (1.0 + std::exp(-eta));
      for (std::size_t j = 0; j < p; ++j) {
        score[j] += x[i][j] * (y[i] - mu);
        for (std::size_t k = 0; k < p; ++k) info[j][k] += x[i][j] * x[i][k] * mu * (1 - mu);
      }
    }
    const auto step = solve(info, score);
    for (std::size_t j = 0; j < p; ++j) beta[j] += step[j];
  }
  DenseFit f;
  f.beta = beta;
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> e(p, 0.0);
    e[j] = 1.0;
    f.se.push_back(std::sqrt(solve(info, e)[j]));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double eta = 0;
    for (std::size_t j = 0; j < p; ++j) eta += x[i][j] * beta[j];
    f.loglik += y[i] * eta - std::log1p(std::exp(eta));
  }
  return f;
}

DesignMatrix design_of(const std::vector<PrimeSample>& rows, const std::string& formula) {
  return build_design(rows, parse_formula(formula));
}

}  // namespace

TEST(Wald, TwoSidedNormalP) {
  const auto t = make_estimate("x", 1.0, 0.5);
  EXPECT_DOUBLE_EQ(t.z, 2.0);
  EXPECT_NEAR(t.p, 0.0455003, 1e-7);
  EXPECT_DOUBLE_EQ(two_sided_p(0.0), 1.0);
}

TEST(Logistic, MatchesDenseNewtonOracle) {
  const auto rows = load_logistic50();
  ASSERT_EQ(rows.size(), 50u);
  const auto d = design_of(rows, "prime ~ ln_freq + same_conv + ln_size");
  std::vector<std::vector<double>> x;
  std::vector<double> y;
  for (const auto& r : rows) {
    x.push_back({1.0, r.ln_freq, static_cast<double>(r.same_conv), r.ln_size});
    y.push_back(r.prime);
  }
  const auto oracle = dense_newton(x, y);
  const auto fit = fit_logistic(d);
  ASSERT_TRUE(fit.converged) << fit.message;
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(fit.terms[j].beta, oracle.beta[j], 1e-6) << j;
    EXPECT_NEAR(fit.terms[j].se, oracle.se[j], 1e-6) << j;
  }
  EXPECT_NEAR(fit.loglik, oracle.loglik, 1e-8);
}

TEST(Logistic, FrozenCoefficients) {
  // Frozen from an independent reference fit of the same 50 rows.
  const auto fit = fit_logistic(design_of(load_logistic50(), "prime ~ ln_freq + same_conv + ln_size + ln_freq:same_conv"));
  const double beta[] = {-0.1938761819428687, 0.4200669148071033, 1.5103004188138847, -0.309836674829804,
                         1.5393751872965757};
  const double se[] = {0.45455004007478733, 0.5127161161860344, 0.8417074926524999, 0.465528811869314,
                       0.9296438982359603};
  ASSERT_EQ(fit.terms.size(), 5u);
  EXPECT_EQ(fit.terms[4].name, "ln_freq:same_conv");
  for (std::size_t j = 0; j < 5; ++j) {
    EXPECT_NEAR(fit.terms[j].beta, beta[j], 1e-6) << j;
    EXPECT_NEAR(fit.terms[j].se, se[j], 1e-6) << j;
  }
  EXPECT_NEAR(fit.loglik, -27.313411017579394, 1e-8);
}

TEST(Logistic, BalancedInterceptIsZero) {
  std::vector<PrimeSample> rows(10);
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].prime = i % 2;
  const auto fit = fit_logistic(design_of(rows, "prime ~ 1"));
  EXPECT_NEAR(fit.terms[0].beta, 0.0, 1e-12);
  EXPECT_NEAR(fit.terms[0].se, std::sqrt(4.0 / 10.0), 1e-12);
}

TEST(Logistic, LoglikNeverDecreases) {
  const auto fit = fit_logistic(design_of(load_logistic50(), "prime ~ ln_freq + same_conv + ln_size"));
  ASSERT_GE(fit.loglik_trace.size(), 2u);
  for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) EXPECT_GE(fit.loglik_trace[i], fit.loglik_trace[i - 1]);
}

TEST(Logistic, ScalingACovariateRescalesItsCoefficient) {
  auto rows = load_logistic50();
  const auto base = fit_logistic(design_of(rows, "prime ~ ln_freq + same_conv"));
  for (auto& r : rows) r.ln_freq *= 2.0;
  const auto scaled = fit_logistic(design_of(rows, "prime ~ ln_freq + same_conv"));
  EXPECT_NEAR(scaled.term("ln_freq").beta, base.term("ln_freq").beta / 2.0, 1e-8);
  EXPECT_NEAR(scaled.term("ln_freq").z, base.term("ln_freq").z, 1e-6);
  EXPECT_NEAR(scaled.loglik, base.loglik, 1e-9);
}

TEST(Logistic, CompleteSeparationIsANumericalError) {
  auto rows = load_logistic50();
  for (auto& r : rows) r.prime = r.same_conv;
  EXPECT_THROW(fit_logistic(design_of(rows, "prime ~ same_conv")), NumericalError);
}

TEST(Logistic, CollinearColumnsAreSingular) {
  const auto rows = load_logistic50();
  auto d = design_of(rows, "prime ~ ln_freq + ln_size");
  d.x.col(2) = d.x.col(1) * 3.0;
  EXPECT_THROW(fit_logistic(d), NumericalError);
}

TEST(Logistic, RejectsNonBinaryResponse) {
  auto d = design_of(load_logistic50(), "prime ~ ln_freq");
  d.y(0) = 0.5;
  EXPECT_THROW(fit_logistic(d), DataError);
}
