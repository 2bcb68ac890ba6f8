#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mixedreg/constraints.hpp"
#include "mixedreg/latent_solver.hpp"
#include "mixedreg/model.hpp"
#include "mixedreg/working_model.hpp"

namespace mixedreg {

struct FitControls {
  double eps_beta = 1e-8;    // squared norm tolerance on beta steps
  double eps_sigma = 1e-8;   // squared Frobenius tolerance on Sigma steps
  int max_outer = 200;
  double inner_tol = 1e-10;  // relative objective change, BCD and prox loops
  int max_inner = 100;
  double gamma = 0.5;        // inertia weight
  double alpha_init = 1.0;
  double ls_shrink = 0.5;
  double ls_grow = 2.0;
  int max_prox = 500;
  double proj_tol = 1e-10;
  int proj_maxiter = 10000;
  LatentControls latent;
};

void validate_controls(const FitControls& ctl);

struct WorkingState {
  Eigen::MatrixXd w;      // n x r expansion points
  Eigen::VectorXd beta;   // q
  Eigen::MatrixXd sigma;  // r x r, inside the feasible set
};

struct ProxInfo {
  int iterations = 0;
  bool stalled = false;   // line search found no decrease after 60 halvings
  double h_final = 0.0;
  double next_alpha = 0.0;  // warm start for a follow-up descent
};

// Inertial proximal projected gradient descent on Sigma at fixed (w, beta):
//   Sigma_{t+1} = project( Sigma_t - alpha grad + gamma (Sigma_t - Sigma_{t-1}) )
// with projection-aware backtracking on alpha (accept when the objective
// drops below current + 1e-12; warm start alpha at last accepted * ls_grow).
// Stops when the relative objective change falls under inner_tol or after
// max_prox iterations. The first momentum term is zero. The returned matrix
// always lies in the feasible set.
Eigen::MatrixXd sigma_prox_descent(const WorkingModel& wm,
                                   const Eigen::VectorXd& beta,
                                   const Eigen::MatrixXd& sigma0,
                                   const ConstraintSpec& cspec,
                                   const FitControls& ctl,
                                   ProxInfo* info = nullptr);

struct BcdResult {
  Eigen::VectorXd beta;
  Eigen::MatrixXd sigma;
  double h_final = 0.0;
  int cycles = 0;
};

// Block coordinate descent over (beta, Sigma) at fixed expansion points:
// alternates the closed-form GLS update with sigma_prox_descent until the
// relative objective change falls under inner_tol or max_inner cycles.
// The objective is verified non-increasing across every half step.
// `htrace`, when given, collects the objective after every half step.
BcdResult bcd_beta_sigma(const WorkingModel& wm, const WorkingState& start,
                         const ConstraintSpec& cspec, const FitControls& ctl,
                         const std::vector<BetaRestriction>& restrictions = {},
                         std::vector<double>* htrace = nullptr);

// Starting coefficients: one IRLS pass over all scalar observations treated
// as independent canonical-link GLM responses. With a block-diagonal design
// this decouples into separate per-response GLM fits. Restricted
// coordinates are pinned to their stated values throughout.
Eigen::VectorXd initial_beta(const ModelSpec& model, const Dataset& data,
                             const std::vector<BetaRestriction>& restrictions = {});

// Starting covariance: identity with fixed diagonals overwritten, projected
// into the feasible set.
Eigen::MatrixXd initial_sigma(const ConstraintSpec& cspec, const FitControls& ctl);

struct FitResult {
  Eigen::VectorXd beta;
  Eigen::MatrixXd sigma;
  Eigen::MatrixXd w;
  double h_final = 0.0;
  int outer_iters = 0;
  bool converged = false;
  std::vector<double> trace;          // objective after each outer iteration
  std::vector<std::string> warnings;
};

// Full estimation loop: alternates the per-observation expansion point
// update with block coordinate descent over (beta, Sigma); terminates when
// both squared step norms fall under eps_beta / eps_sigma or at max_outer.
// Validates the model, data, constraints and identifiability up front.
// `start`, when given, replaces the default initialization; its covariance
// is projected into the feasible set and restricted coefficients are pinned.
FitResult fit(const ModelSpec& model, const Dataset& data,
              const ConstraintSpec& cspec, const FitControls& ctl = {},
              const std::vector<BetaRestriction>& restrictions = {},
              const WorkingState* start = nullptr);

}  // namespace mixedreg
