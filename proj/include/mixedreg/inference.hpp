#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mixedreg/fit.hpp"

namespace mixedreg {

// Upper tail of the chi-square distribution with df degrees of freedom,
// computed from the regularized incomplete gamma function (series for small
// arguments, continued fraction otherwise). Absolute error below 1e-10.
double chisq_sf(double x, int df);

// Inverse of chisq_sf in its first argument: x with sf(x) = 1 - level.
double chisq_quantile(double level, int df);

/// Nested pair of constraint sets plus optional coefficient restrictions.
/// The null set must imply the alternative set: every alternative
/// constraint must be present under the null.
struct Hypothesis {
  ConstraintSpec null_cspec;
  ConstraintSpec alt_cspec;
  std::vector<BetaRestriction> beta_restrictions;
};

// Number of independent scalar restrictions the null adds on top of the
// alternative: extra fixed entries, plus one per tie-group element beyond
// the first (counted net of the alternative's ties), plus coefficient
// restrictions.
int hypothesis_df(const Hypothesis& hyp);

// Structural nestedness and boundary checks. Rejects hypotheses that pin a
// diagonal to zero (those put an eigenvalue on the boundary, where the
// chi-square calibration does not apply).
void validate_hypothesis(const Hypothesis& hyp);

struct FitSummary {
  Eigen::VectorXd beta;
  Eigen::MatrixXd sigma;
  double h = 0.0;
  bool converged = false;
  int iterations = 0;
};

struct TestResult {
  double T = 0.0;
  int df = 0;
  double p_value = 1.0;
  FitSummary null_fit;
  FitSummary alt_fit;
  std::vector<std::string> warnings;
};

// Approximate likelihood-ratio test. Stage one fits under the null
// (coefficient restrictions eliminated from the GLS step, covariance
// constrained by null_cspec). Stage two freezes the expansion points at the
// null solution and runs block coordinate descent under the alternative
// constraints, started from the null estimates, which makes
//   T = h(null) - h(alt at frozen expansion points)
// nonnegative up to roundoff. p-value from the chi-square upper tail.
// A degenerate hypothesis with df = 0 yields T = 0, p = 1.
TestResult lrt(const ModelSpec& model, const Dataset& data,
               const Hypothesis& hyp, const FitControls& ctl = {});

struct ProfileCi {
  double lo = 0.0;
  double hi = 0.0;
  bool lo_unbounded = false;  // no bracket found below within the step cap
  bool hi_unbounded = false;
  double estimate = 0.0;      // unconstrained point estimate of the element
  double level = 0.0;
};

// Confidence interval for one covariance element by numerical inversion of
// the likelihood-ratio test: sweeps v away from the point estimate in steps
// of 0.1 (1 + |estimate|) until T(v) crosses the chi-square(1) quantile
// (at most 50 steps per side), then bisects the crossing to width 1e-4.
// Values of v with an infeasible constraint set count as crossed.
ProfileCi profile_ci(const ModelSpec& model, const Dataset& data,
                     const ConstraintSpec& cspec, int j, int k, double level,
                     const FitControls& ctl = {});

}  // namespace mixedreg
