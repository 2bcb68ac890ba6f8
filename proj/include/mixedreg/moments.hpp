#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mixedreg/model.hpp"

namespace mixedreg {

/// Quadrature rule rewritten for standard-normal expectations:
/// E f(Z) ~= sum_a weights[a] * f(nodes[a]), weights summing to 1.
struct GaussHermite {
  Eigen::VectorXd nodes;
  Eigen::VectorXd weights;
};

// Order-64 rule via the Golub-Welsch eigen decomposition, built once and
// cached. The order is fixed so outputs are bit-stable.
const GaussHermite& gauss_hermite64();

// Marginal mean of one response whose latent coordinate is N(mu, s2):
// Gaussian mu; Poisson exp(mu + s2/2); Bernoulli by quadrature.
double marginal_mean_one(const Family& f, double mu, double s2);

// Marginal mean vector at one design matrix.
Eigen::VectorXd marginal_mean(const ModelSpec& model, const Eigen::VectorXd& beta,
                              const Eigen::MatrixXd& sigma,
                              const Eigen::MatrixXd& X);

// Marginal covariance of the response vector. Closed forms for pairs of
// Gaussian and Poisson coordinates; pairs involving a Bernoulli coordinate
// integrate the product of inverse links against the bivariate latent
// normal on a 64x64 tensor grid. Diagonals carry the conditional-variance
// term E cov(Y_j | W_j).
Eigen::MatrixXd marginal_cov(const ModelSpec& model, const Eigen::VectorXd& beta,
                             const Eigen::MatrixXd& sigma,
                             const Eigen::MatrixXd& X);

struct MarginalMoments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd cor;
};

MarginalMoments marginal_moments(const ModelSpec& model,
                                 const Eigen::VectorXd& beta,
                                 const Eigen::MatrixXd& sigma,
                                 const Eigen::MatrixXd& X);

// Marginal mean at every new design matrix; row i of the result is the
// predicted response vector for X_new[i].
Eigen::MatrixXd predict(const ModelSpec& model, const Eigen::VectorXd& beta,
                        const Eigen::MatrixXd& sigma,
                        const std::vector<Eigen::MatrixXd>& X_new);

struct MonotonicityReport {
  bool mean_increasing = false;  // E g(W1) along the mean grid
  bool cov_increasing = false;   // E g(W1) h(W2) along the covariance grid
  double min_mean_diff = 0.0;    // smallest successive difference seen
  double min_cov_diff = 0.0;
};

// Numeric check that the marginal mean is increasing in the latent mean and
// that the cross moment E g(W1) h(W2) is increasing in the latent
// covariance (unit variances, zero means on the covariance curve).
MonotonicityReport monotonicity_check(const Family& g, const Family& h,
                                      const std::vector<double>& mean_grid,
                                      const std::vector<double>& cov_grid);

}  // namespace mixedreg
