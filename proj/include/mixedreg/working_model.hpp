#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <vector>

#include "mixedreg/model.hpp"

namespace mixedreg {

/// Quantities of the local quadratic approximation at expansion points w:
/// per observation i the cumulant gradient, the diagonal Hessian weights
/// d_i = c''(w_i), the weighted design Xt_i = diag(d_i) X_i and the working
/// response yt_i = y_i - grad c(w_i) + diag(d_i) w_i. Refreshed whenever the
/// expansion points move; everything downstream reads from here.
class WorkingModel {
 public:
  WorkingModel(const ModelSpec& model, const Dataset& data);

  void refresh(const Eigen::MatrixXd& w);

  int n() const { return n_; }
  int r() const { return r_; }
  int q() const { return q_; }
  const Eigen::VectorXd& psi() const { return psi_; }
  const Eigen::MatrixXd& dvec() const { return d_; }          // n x r
  const Eigen::MatrixXd& ytilde() const { return yt_; }       // n x r
  const Eigen::MatrixXd& xtilde(int i) const { return xt_[i]; }
  const Dataset& data() const { return *data_; }
  const ModelSpec& model() const { return *model_; }

 private:
  const ModelSpec* model_;
  const Dataset* data_;
  int n_, r_, q_;
  Eigen::VectorXd psi_;
  Eigen::MatrixXd d_;
  Eigen::MatrixXd yt_;
  std::vector<Eigen::MatrixXd> xt_;
};

/// Per-observation conditional covariance of the working response,
/// C_i = diag(psi) D_i + D_i Sigma D_i, with cached Cholesky factors.
/// Valid for one (w, Sigma) pair; refresh when either moves.
class Factors {
 public:
  void refresh(const WorkingModel& wm, const Eigen::MatrixXd& sigma);

  double logdet_sum() const { return logdet_sum_; }
  const Eigen::LLT<Eigen::MatrixXd>& llt(int i) const { return llt_[i]; }

 private:
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt_;
  double logdet_sum_ = 0.0;
};

// Local linearization of the conditional mean at expansion point w:
//   m(w, beta) = grad c(w) + D(w) (X beta - w),  D(w) = diag(c''(w)).
Eigen::VectorXd working_mean(const ModelSpec& model, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& beta,
                             const Eigen::MatrixXd& X);

// Covariance of the working response: diag(psi) D(w) + D(w) Sigma D(w).
Eigen::MatrixXd working_cov(const ModelSpec& model, const Eigen::VectorXd& w,
                            const Eigen::MatrixXd& sigma);

// Working objective at fixed expansion points:
//   h_n(beta, Sigma) = sum_i { log det C_i + (yt_i - Xt_i beta)' C_i^{-1} (yt_i - Xt_i beta) }
// carrying the deviance convention (factor 2 absorbed, no extra 1/2).
double objective(const WorkingModel& wm, const Factors& fac,
                 const Eigen::VectorXd& beta);

// Matrix gradient of the objective in Sigma with beta held fixed:
//   sum_i { D_i C_i^{-1} D_i - D_i C_i^{-1} r_i r_i' C_i^{-1} D_i }.
Eigen::MatrixXd sigma_gradient(const WorkingModel& wm, const Factors& fac,
                               const Eigen::VectorXd& beta);

struct BetaRestriction {
  int index = 0;   // 0-based coordinate of the stacked coefficient vector
  double value = 0.0;
};

// Generalized least squares update of beta at fixed (w, Sigma):
// minimizes the quadratic part of the objective. Restricted coordinates are
// held at their stated values and eliminated from the normal equations.
Eigen::VectorXd beta_gls(const WorkingModel& wm, const Factors& fac,
                         const std::vector<BetaRestriction>& restrictions = {});

}  // namespace mixedreg
