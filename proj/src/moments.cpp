#include "mixedreg/moments.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "mixedreg/errors.hpp"

namespace mixedreg {

namespace {

GaussHermite build_gauss_hermite(int order) {
  // Golub-Welsch on the symmetric Jacobi matrix of the (physicists')
  // Hermite recurrence; eigenvalues are the nodes, squared first eigenvector
  // components the normalized weights.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(0.5 * k);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  GaussHermite gh;
  gh.nodes = std::sqrt(2.0) * eig.eigenvalues();
  gh.weights = eig.eigenvectors().row(0).transpose().array().square();
  gh.weights /= gh.weights.sum();
  return gh;
}

// Lower Cholesky-type factor of the 2x2 latent submatrix, tolerating
// singular and rank-deficient inputs.
void factor2(double s11, double s12, double s22, double& l11, double& l21,
             double& l22) {
  l11 = std::sqrt(std::max(s11, 0.0));
  l21 = l11 > 0.0 ? s12 / l11 : 0.0;
  l22 = std::sqrt(std::max(s22 - l21 * l21, 0.0));
}

double cond_var_weight(const Family& f, double w) {
  return f.psi * varweight(f, w);
}

}  // namespace

const GaussHermite& gauss_hermite64() {
  static const GaussHermite gh = build_gauss_hermite(64);
  return gh;
}

double marginal_mean_one(const Family& f, double mu, double s2) {
  switch (f.kind) {
    case FamilyKind::Gaussian:
      return mu;
    case FamilyKind::Poisson:
      return std::exp(mu + 0.5 * s2);
    case FamilyKind::Bernoulli: {
      const GaussHermite& gh = gauss_hermite64();
      const double sd = std::sqrt(std::max(s2, 0.0));
      double m = 0.0;
      for (int a = 0; a < gh.nodes.size(); ++a) {
        m += gh.weights(a) * logistic(mu + sd * gh.nodes(a));
      }
      return m;
    }
  }
  return std::numeric_limits<double>::quiet_NaN();
}

Eigen::VectorXd marginal_mean(const ModelSpec& model, const Eigen::VectorXd& beta,
                              const Eigen::MatrixXd& sigma,
                              const Eigen::MatrixXd& X) {
  const int r = model.r();
  if (X.rows() != r || X.cols() != beta.size() || sigma.rows() != r) {
    throw SpecError("marginal mean: dimension mismatch");
  }
  const Eigen::VectorXd mu = X * beta;
  Eigen::VectorXd m(r);
  for (int j = 0; j < r; ++j) {
    m(j) = marginal_mean_one(model.families[j], mu(j), sigma(j, j));
  }
  return m;
}

Eigen::MatrixXd marginal_cov(const ModelSpec& model, const Eigen::VectorXd& beta,
                             const Eigen::MatrixXd& sigma,
                             const Eigen::MatrixXd& X) {
  const int r = model.r();
  if (X.rows() != r || X.cols() != beta.size() || sigma.rows() != r ||
      sigma.cols() != r) {
    throw SpecError("marginal covariance: dimension mismatch");
  }
  const GaussHermite& gh = gauss_hermite64();
  const int m = static_cast<int>(gh.nodes.size());
  const Eigen::VectorXd mu = X * beta;
  Eigen::VectorXd means(r);
  for (int j = 0; j < r; ++j) {
    means(j) = marginal_mean_one(model.families[j], mu(j), sigma(j, j));
  }

  Eigen::MatrixXd cov(r, r);
  for (int j = 0; j < r; ++j) {
    const Family& fj = model.families[j];
    // Diagonal: latent variance of the inverse-link transform plus the
    // average conditional variance.
    switch (fj.kind) {
      case FamilyKind::Gaussian:
        cov(j, j) = fj.psi + sigma(j, j);
        break;
      case FamilyKind::Poisson: {
        // Printed quasi-likelihood form: exp(2 mu + s) { exp(s) - 1
        // + psi exp(-mu - s/2) }.
        const double s = sigma(j, j);
        cov(j, j) = std::exp(2.0 * mu(j) + s) *
                    (std::exp(s) - 1.0 + fj.psi * std::exp(-mu(j) - 0.5 * s));
        break;
      }
      case FamilyKind::Bernoulli: {
        const double sd = std::sqrt(std::max(sigma(j, j), 0.0));
        double second = 0.0;
        double condvar = 0.0;
        for (int a = 0; a < m; ++a) {
          const double w = mu(j) + sd * gh.nodes(a);
          const double p = logistic(w);
          second += gh.weights(a) * p * p;
          condvar += gh.weights(a) * cond_var_weight(fj, w);
        }
        cov(j, j) = second - means(j) * means(j) + condvar;
        break;
      }
    }

    for (int k = 0; k < j; ++k) {
      const Family& fk = model.families[k];
      const bool bern = fj.kind == FamilyKind::Bernoulli ||
                        fk.kind == FamilyKind::Bernoulli;
      double value;
      if (bern) {
        // Tensor quadrature of the product of inverse links against the
        // bivariate latent normal.
        double l11, l21, l22;
        factor2(sigma(j, j), sigma(j, k), sigma(k, k), l11, l21, l22);
        double cross = 0.0;
        for (int a = 0; a < m; ++a) {
          const double wj = mu(j) + l11 * gh.nodes(a);
          const double gj = mean(fj, wj);
          double inner = 0.0;
          for (int b = 0; b < m; ++b) {
            const double wk = mu(k) + l21 * gh.nodes(a) + l22 * gh.nodes(b);
            inner += gh.weights(b) * mean(fk, wk);
          }
          cross += gh.weights(a) * gj * inner;
        }
        value = cross - means(j) * means(k);
      } else if (fj.kind == FamilyKind::Gaussian &&
                 fk.kind == FamilyKind::Gaussian) {
        value = sigma(j, k);
      } else if (fj.kind == FamilyKind::Poisson &&
                 fk.kind == FamilyKind::Poisson) {
        value = std::exp(mu(j) + mu(k) + 0.5 * sigma(j, j) + 0.5 * sigma(k, k)) *
                (std::exp(sigma(j, k)) - 1.0);
      } else {
        // One Gaussian, one Poisson coordinate.
        const int pj = fj.kind == FamilyKind::Poisson ? j : k;
        value = sigma(j, k) * std::exp(mu(pj) + 0.5 * sigma(pj, pj));
      }
      cov(j, k) = value;
      cov(k, j) = value;
    }
  }
  if (!cov.allFinite()) {
    throw NumericError("marginal covariance overflowed");
  }
  return cov;
}

MarginalMoments marginal_moments(const ModelSpec& model,
                                 const Eigen::VectorXd& beta,
                                 const Eigen::MatrixXd& sigma,
                                 const Eigen::MatrixXd& X) {
  MarginalMoments mm;
  mm.mean = marginal_mean(model, beta, sigma, X);
  mm.cov = marginal_cov(model, beta, sigma, X);
  const Eigen::VectorXd scale = mm.cov.diagonal().cwiseSqrt().cwiseInverse();
  mm.cor = scale.asDiagonal() * mm.cov * scale.asDiagonal();
  mm.cor.diagonal().setOnes();  // exact unit diagonal, not scale rounding
  return mm;
}

Eigen::MatrixXd predict(const ModelSpec& model, const Eigen::VectorXd& beta,
                        const Eigen::MatrixXd& sigma,
                        const std::vector<Eigen::MatrixXd>& X_new) {
  Eigen::MatrixXd out(static_cast<int>(X_new.size()), model.r());
  for (std::size_t i = 0; i < X_new.size(); ++i) {
    out.row(static_cast<int>(i)) =
        marginal_mean(model, beta, sigma, X_new[i]).transpose();
  }
  return out;
}

MonotonicityReport monotonicity_check(const Family& g, const Family& h,
                                      const std::vector<double>& mean_grid,
                                      const std::vector<double>& cov_grid) {
  const GaussHermite& gh = gauss_hermite64();
  const int m = static_cast<int>(gh.nodes.size());
  MonotonicityReport rep;
  rep.min_mean_diff = std::numeric_limits<double>::infinity();
  rep.min_cov_diff = std::numeric_limits<double>::infinity();

  double prev = 0.0;
  for (std::size_t idx = 0; idx < mean_grid.size(); ++idx) {
    const double value = marginal_mean_one(g, mean_grid[idx], 1.0);
    if (idx > 0) rep.min_mean_diff = std::min(rep.min_mean_diff, value - prev);
    prev = value;
  }
  rep.mean_increasing = mean_grid.size() > 1 && rep.min_mean_diff > -1e-10;

  for (std::size_t idx = 0; idx < cov_grid.size(); ++idx) {
    const double s12 = cov_grid[idx];
    double l11, l21, l22;
    factor2(1.0, s12, 1.0, l11, l21, l22);
    double cross = 0.0;
    for (int a = 0; a < m; ++a) {
      const double w1 = l11 * gh.nodes(a);
      double inner = 0.0;
      for (int b = 0; b < m; ++b) {
        inner += gh.weights(b) * mean(h, l21 * gh.nodes(a) + l22 * gh.nodes(b));
      }
      cross += gh.weights(a) * mean(g, w1) * inner;
    }
    if (idx > 0) rep.min_cov_diff = std::min(rep.min_cov_diff, cross - prev);
    prev = cross;
  }
  rep.cov_increasing = cov_grid.size() > 1 && rep.min_cov_diff > -1e-10;
  return rep;
}

}  // namespace mixedreg
