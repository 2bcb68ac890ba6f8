#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "mixedreg/fit.hpp"
#include "mixedreg/model.hpp"
#include "mixedreg/rng.hpp"

namespace mixedreg {

using rng::Stream;

enum class SigmaStructure { AR, CS, BLOCK };

/// Synthetic-data design: r responses in thirds (Gaussian, Bernoulli,
/// Poisson) unless an explicit layout is given, p coefficients per response
/// including the intercept, latent covariance 0.5 * S with S per structure.
struct SimDesign {
  int n = 200;
  int r = 9;
  int p = 5;
  SigmaStructure structure = SigmaStructure::AR;
  double rho = 0.5;
  std::uint64_t seed = 0;
  std::vector<FamilyKind> layout;   // empty: thirds, needs r % 3 == 0
  double psi_gaussian = 0.01;
  bool shared_predictors = false;   // same predictor vector for all responses
  bool second_coef_effect = false;  // second coefficient from U[-g/100, g/100]
  double gamma_effect = 0.0;
};

void validate_design(const SimDesign& design);

std::vector<FamilyKind> design_layout(const SimDesign& design);
ModelSpec design_model(const SimDesign& design);

// Constraint set used when fitting design data: Bernoulli latent variances
// fixed at 1, optionally all off-diagonals zero.
ConstraintSpec design_cspec(const SimDesign& design, bool diagonal);

// 0.5 * S. AR: S_jk = rho^|j-k|. CS: S_jk = rho + (1-rho) I(j=k).
// BLOCK (r divisible by 3): S_jk = rho when j != k agree mod r/3, so each
// block holds one coordinate of each response type under the thirds layout.
Eigen::MatrixXd gen_sigma(SigmaStructure structure, double rho, int r);

// Coefficients: intercept 2 for Gaussian and Poisson, 0 for Bernoulli;
// remaining entries U[-0.5, 0.5] except the optional second-coefficient
// effect. One child stream per response.
Eigen::VectorXd draw_beta(const SimDesign& design, const Stream& stream);

// Design matrices (block diagonal, entries U[-1,1] plus intercept), latent
// vectors through a spectral square root of sigma, responses per family.
// Child streams per observation and coordinate, so the draw is independent
// of evaluation order.
Dataset draw_data(const SimDesign& design, const Eigen::VectorXd& beta,
                  const Eigen::MatrixXd& sigma, const Stream& stream, int n_obs);

struct GeneratedData {
  Dataset data;
  Eigen::VectorXd beta;
  Eigen::MatrixXd sigma;
};

// Full generation pass from the design seed; bit-identical per seed.
GeneratedData gen_dataset(const SimDesign& design);

struct PredictionExperimentResult {
  int reps_requested = 0;
  int reps_done = 0;
  int fit_failures = 0;
  std::vector<double> full_ratio;  // per replication, SSE relative to oracle
  std::vector<double> diag_ratio;
  // Per replication, indexed by FamilyKind; NaN when the layout lacks a type.
  std::vector<std::array<double, 3>> full_kind_ratio;
  std::vector<std::array<double, 3>> diag_kind_ratio;
  double full_mean = 0.0;
  double diag_mean = 0.0;
  std::array<double, 3> full_mean_by_kind{};
  std::array<double, 3> diag_mean_by_kind{};
};

// Out-of-sample prediction error of the full and the diagonal-covariance
// fits, each relative to predictions computed from the true parameters.
// Train and test sets share (beta, sigma) within a replication.
PredictionExperimentResult run_prediction_experiment(const SimDesign& design,
                                                     int reps, int n_test,
                                                     const FitControls& ctl = {});

enum class LrtKind { SigmaDiag, BetaRow };

struct LrtExperimentResult {
  int reps_requested = 0;
  int reps_done = 0;
  int fit_failures = 0;
  int rejections = 0;
  double rejection_rate = 0.0;
  double mc_se = 0.0;
  std::vector<double> pvalues;
  std::vector<double> tstats;
};

// Rejection frequency of the likelihood-ratio test at the 5% level.
// SigmaDiag tests a diagonal latent covariance against an unconstrained
// one. BetaRow tests the second coefficient of every response against zero
// under the shared-predictor layout; gamma_effect scales the true effects.
LrtExperimentResult run_lrt_experiment(const SimDesign& design, int reps,
                                       LrtKind kind,
                                       const FitControls& ctl = {});

}  // namespace mixedreg
