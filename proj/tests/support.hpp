#pragma once

// Shared fixtures for the estimation and inference suites: an all-Gaussian
// instance generator and an exact maximum likelihood oracle. The oracle
// iterates two closed forms, generalized least squares for the coefficients
// and the residual second-moment matrix for the covariance, and touches none
// of the solver code paths.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mixedreg/model.hpp"
#include "mixedreg/rng.hpp"
#include "mixedreg/working_model.hpp"

namespace testsupport {

inline Eigen::MatrixXd clamp_psd(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (S + S.transpose()));
  const Eigen::VectorXd ev = eig.eigenvalues().cwiseMax(0.0);
  return eig.eigenvectors() * ev.asDiagonal() * eig.eigenvectors().transpose();
}

struct GaussianInstance {
  mixedreg::ModelSpec model;
  mixedreg::Dataset data;
  Eigen::VectorXd psi;
  Eigen::VectorXd beta_true;
  Eigen::MatrixXd sigma_true;
};

// Identity-link responses with designs X_i = I_r kron x_i^T (intercept plus
// uniform predictors). The true covariance sits well inside the positive
// cone so the likelihood has an interior maximum.
inline GaussianInstance gaussian_instance(std::uint64_t seed, int n, int r,
                                          int p,
                                          const std::vector<double>& psis) {
  mixedreg::rng::Stream stream(seed);
  GaussianInstance inst;
  inst.psi.resize(r);
  for (int j = 0; j < r; ++j) {
    inst.psi(j) = psis[static_cast<std::size_t>(j)];
    inst.model.families.push_back(mixedreg::Family::gaussian(inst.psi(j)));
  }

  Eigen::MatrixXd predictors(n, p);
  for (int i = 0; i < n; ++i) {
    predictors(i, 0) = 1.0;
    for (int c = 1; c < p; ++c) predictors(i, c) = stream.uniform(-1.0, 1.0);
  }
  inst.beta_true.resize(r * p);
  for (int k = 0; k < r * p; ++k) inst.beta_true(k) = stream.uniform(-1.0, 1.0);

  Eigen::MatrixXd A(r, r);
  for (int j = 0; j < r; ++j) {
    for (int k = 0; k < r; ++k) A(j, k) = stream.normal(0.0, 0.4);
  }
  inst.sigma_true =
      A * A.transpose() / r + 0.5 * Eigen::MatrixXd::Identity(r, r);

  const Eigen::MatrixXd noise_cov =
      Eigen::MatrixXd(inst.psi.asDiagonal()) + inst.sigma_true;
  const Eigen::LLT<Eigen::MatrixXd> llt(noise_cov);
  Eigen::MatrixXd y(n, r);
  Eigen::VectorXd z(r);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < r; ++j) z(j) = stream.normal(0.0, 1.0);
    Eigen::VectorXd mean(r);
    for (int j = 0; j < r; ++j) {
      mean(j) = predictors.row(i).dot(inst.beta_true.segment(j * p, p));
    }
    y.row(i) = (mean + llt.matrixL() * z).transpose();
  }
  inst.data = mixedreg::make_kronecker_dataset(y, predictors);
  return inst;
}

struct GaussianMle {
  Eigen::VectorXd beta;
  Eigen::MatrixXd sigma;
  double loglik = 0.0;
  bool converged = false;
};

// Exact Gaussian maximum likelihood, optionally with a diagonal covariance
// or pinned coefficients. Both conditional maximizers are closed forms:
// beta solves the generalized least squares normal equations under
// M = diag(psi) + sigma (restricted coordinates eliminated), and M maximizes
// at the residual second-moment matrix S (its diagonal under the diagonal
// constraint). The cone clamp must stay inactive for exactness; callers
// assert that on their instances.
inline GaussianMle gaussian_mle(
    const mixedreg::Dataset& data, const Eigen::VectorXd& psi,
    bool diagonal_sigma = false,
    const std::vector<mixedreg::BetaRestriction>& restrictions = {}) {
  const int n = data.n();
  const int r = data.r();
  const int q = data.q();
  const Eigen::MatrixXd psi_mat = Eigen::MatrixXd(psi.asDiagonal());

  std::vector<int> free_idx;
  {
    std::vector<bool> fixed(static_cast<std::size_t>(q), false);
    for (const auto& rst : restrictions) {
      fixed[static_cast<std::size_t>(rst.index)] = true;
    }
    for (int k = 0; k < q; ++k) {
      if (!fixed[static_cast<std::size_t>(k)]) free_idx.push_back(k);
    }
  }

  GaussianMle out;
  out.beta = Eigen::VectorXd::Zero(q);
  for (const auto& rst : restrictions) out.beta(rst.index) = rst.value;
  out.sigma = Eigen::MatrixXd::Identity(r, r);

  Eigen::VectorXd beta = out.beta;
  Eigen::MatrixXd sigma = out.sigma;
  for (int it = 0; it < 2000; ++it) {
    const Eigen::MatrixXd M = psi_mat + sigma;
    const Eigen::LLT<Eigen::MatrixXd> llt(M);

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
    for (int i = 0; i < n; ++i) {
      const Eigen::MatrixXd MX = llt.solve(data.X[i]);
      A.noalias() += data.X[i].transpose() * MX;
      b.noalias() += MX.transpose() * data.y.row(i).transpose();
    }
    Eigen::VectorXd beta_new = beta;
    if (!free_idx.empty()) {
      const int qf = static_cast<int>(free_idx.size());
      Eigen::MatrixXd Aff(qf, qf);
      Eigen::VectorXd bf(qf);
      for (int a = 0; a < qf; ++a) {
        double rhs = b(free_idx[static_cast<std::size_t>(a)]);
        for (const auto& rst : restrictions) {
          rhs -= A(free_idx[static_cast<std::size_t>(a)], rst.index) * rst.value;
        }
        bf(a) = rhs;
        for (int c = 0; c < qf; ++c) {
          Aff(a, c) = A(free_idx[static_cast<std::size_t>(a)],
                        free_idx[static_cast<std::size_t>(c)]);
        }
      }
      const Eigen::VectorXd bfree = Aff.ldlt().solve(bf);
      for (int a = 0; a < qf; ++a) {
        beta_new(free_idx[static_cast<std::size_t>(a)]) = bfree(a);
      }
    }

    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(r, r);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd res =
          data.y.row(i).transpose() - data.X[i] * beta_new;
      S.noalias() += res * res.transpose();
    }
    S /= n;
    Eigen::MatrixXd sigma_new;
    if (diagonal_sigma) {
      sigma_new = (S.diagonal() - psi).cwiseMax(0.0).asDiagonal();
    } else {
      sigma_new = clamp_psd(S - psi_mat);
    }

    const double move = std::max((beta_new - beta).lpNorm<Eigen::Infinity>(),
                                 (sigma_new - sigma).lpNorm<Eigen::Infinity>());
    beta = beta_new;
    sigma = sigma_new;
    if (move < 1e-13) {
      out.converged = true;
      break;
    }
  }

  out.beta = beta;
  out.sigma = sigma;
  const Eigen::MatrixXd M = psi_mat + sigma;
  const Eigen::LLT<Eigen::MatrixXd> llt(M);
  double logdet = 0.0;
  for (int j = 0; j < r; ++j) logdet += 2.0 * std::log(llt.matrixL()(j, j));
  double quad = 0.0;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd res = data.y.row(i).transpose() - data.X[i] * beta;
    quad += res.dot(llt.solve(res));
  }
  out.loglik = -0.5 * (n * r * std::log(2.0 * M_PI) + n * logdet + quad);
  return out;
}

}  // namespace testsupport
