#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mixedreg/model.hpp"

namespace mixedreg {

struct LatentControls {
  double kappa = 1e-4;      // ridge added to Sigma before inverting
  double tau = 1e-3;        // pull of w toward X beta, keeps the Hessian PD
  double grad_tol = 1e-8;
  int max_newton = 100;
  double trust_init = 1.0;
  double trust_max = 100.0;
  int threads = 1;          // worker cap for the per-observation updates
};

struct LatentResult {
  bool converged = false;
  double grad_norm = 0.0;
  int iterations = 0;
};

struct BatchLatentResult {
  bool all_converged = true;
  double max_grad_norm = 0.0;
  int max_iterations = 0;
};

// Penalized negative conditional log density driving the expansion point
// update of one observation:
//   F(w) = -sum_j (y_j w_j - c_j(w_j)) / psi_j
//          + (w - xb)' prec (w - xb) / 2 + tau ||w - xb||^2
// with prec = (Sigma + kappa I)^{-1} supplied by the caller.
double latent_objective(const ModelSpec& model, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& xb, const Eigen::MatrixXd& prec,
                        double tau, const Eigen::VectorXd& w);

// Dogleg trust region minimization of latent_objective starting from the
// incoming w, which is updated in place. F is strictly convex (the Hessian
// diag(c''/psi) + prec + 2 tau I is PD), so the minimizer is unique.
// Non-finite trial values reject the step and shrink the radius. `trace`,
// when given, collects F at the start and after every accepted step.
LatentResult update_latent(const ModelSpec& model, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& xb, const Eigen::MatrixXd& prec,
                           const LatentControls& ctl, Eigen::VectorXd& w,
                           std::vector<double>* trace = nullptr);

// Updates every row of w in place, sharing one factorization of
// Sigma + kappa I across observations.
BatchLatentResult update_latent_all(const ModelSpec& model, const Dataset& data,
                                    const Eigen::VectorXd& beta,
                                    const Eigen::MatrixXd& sigma,
                                    const LatentControls& ctl, Eigen::MatrixXd& w);

}  // namespace mixedreg
