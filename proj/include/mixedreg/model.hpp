#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mixedreg/constraints.hpp"
#include "mixedreg/families.hpp"

namespace mixedreg {

/// r-variate response, each coordinate with its own exponential-family
/// density and known dispersion, linked to a latent Gaussian vector with
/// mean X_i beta and a shared covariance.
struct ModelSpec {
  std::vector<Family> families;

  int r() const { return static_cast<int>(families.size()); }
};

/// Observations: y is n x r; X[i] is the r x q design of observation i.
/// q is shared across observations (coefficients are stacked in one vector).
struct Dataset {
  Eigen::MatrixXd y;
  std::vector<Eigen::MatrixXd> X;

  int n() const { return static_cast<int>(y.rows()); }
  int r() const { return static_cast<int>(y.cols()); }
  int q() const { return X.empty() ? 0 : static_cast<int>(X[0].cols()); }
};

// Design where response j of observation i gets predictors x_i with its own
// coefficient block: X_i = I_r (kron) x_i^T, q = r * p.
Dataset make_kronecker_dataset(const Eigen::MatrixXd& y,
                               const Eigen::MatrixXd& predictors);

// One design matrix per observation, supplied directly.
Dataset make_block_dataset(const Eigen::MatrixXd& y,
                           std::vector<Eigen::MatrixXd> X);

// Model-level checks: at least one response, positive dispersions,
// Bernoulli dispersion exactly 1.
void validate_model(const ModelSpec& model);

// Data checks against the model: dimensions, finite X, response support
// (binary for Bernoulli, nonnegative integers for Poisson).
void validate_data(const ModelSpec& model, const Dataset& data);

// Identifiability: every Bernoulli coordinate needs its latent variance
// pinned by a fixed diagonal constraint.
void validate_identifiability(const ModelSpec& model, const ConstraintSpec& cspec);

}  // namespace mixedreg
