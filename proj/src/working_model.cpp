#include "mixedreg/working_model.hpp"

#include <cmath>
#include <string>

#include "mixedreg/errors.hpp"

namespace mixedreg {

WorkingModel::WorkingModel(const ModelSpec& model, const Dataset& data)
    : model_(&model),
      data_(&data),
      n_(data.n()),
      r_(data.r()),
      q_(data.q()),
      psi_(r_),
      d_(n_, r_),
      yt_(n_, r_),
      xt_(static_cast<std::size_t>(n_)) {
  for (int j = 0; j < r_; ++j) psi_(j) = model.families[j].psi;
  for (int i = 0; i < n_; ++i) xt_[i].resize(r_, q_);
}

void WorkingModel::refresh(const Eigen::MatrixXd& w) {
  if (w.rows() != n_ || w.cols() != r_) {
    throw SpecError("expansion points have wrong shape");
  }
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < r_; ++j) {
      const Family& f = model_->families[j];
      const double wij = w(i, j);
      const double dj = varweight(f, wij);
      d_(i, j) = dj;
      yt_(i, j) = data_->y(i, j) - mean(f, wij) + dj * wij;
    }
    xt_[i].noalias() = d_.row(i).transpose().asDiagonal() * data_->X[i];
  }
  if (!d_.allFinite() || !yt_.allFinite()) {
    throw NumericError("working quantities are not finite");
  }
}

void Factors::refresh(const WorkingModel& wm, const Eigen::MatrixXd& sigma) {
  const int n = wm.n();
  const int r = wm.r();
  if (static_cast<int>(llt_.size()) != n) {
    llt_.assign(static_cast<std::size_t>(n), Eigen::LLT<Eigen::MatrixXd>(r));
  }
  logdet_sum_ = 0.0;
  Eigen::MatrixXd C(r, r);
  for (int i = 0; i < n; ++i) {
    const auto d = wm.dvec().row(i);
    C.noalias() = d.transpose().asDiagonal() * sigma * d.transpose().asDiagonal();
    C.diagonal().array() += wm.psi().array() * d.transpose().array();
    llt_[i].compute(C);
    if (llt_[i].info() != Eigen::Success) {
      throw NumericError("conditional covariance of observation " +
                         std::to_string(i + 1) + " is not positive definite");
    }
    logdet_sum_ +=
        2.0 * llt_[i].matrixLLT().diagonal().array().log().sum();
  }
}

Eigen::VectorXd working_mean(const ModelSpec& model, const Eigen::VectorXd& w,
                             const Eigen::VectorXd& beta,
                             const Eigen::MatrixXd& X) {
  const int r = model.r();
  Eigen::VectorXd lin = X * beta - w;
  Eigen::VectorXd m(r);
  for (int j = 0; j < r; ++j) {
    const Family& f = model.families[j];
    m(j) = mean(f, w(j)) + varweight(f, w(j)) * lin(j);
  }
  return m;
}

Eigen::MatrixXd working_cov(const ModelSpec& model, const Eigen::VectorXd& w,
                            const Eigen::MatrixXd& sigma) {
  const int r = model.r();
  Eigen::VectorXd d(r);
  for (int j = 0; j < r; ++j) d(j) = varweight(model.families[j], w(j));
  Eigen::MatrixXd C = d.asDiagonal() * sigma * d.asDiagonal();
  for (int j = 0; j < r; ++j) C(j, j) += model.families[j].psi * d(j);
  return C;
}

double objective(const WorkingModel& wm, const Factors& fac,
                 const Eigen::VectorXd& beta) {
  const int n = wm.n();
  double quad = 0.0;
  Eigen::VectorXd res(wm.r());
  for (int i = 0; i < n; ++i) {
    res = wm.ytilde().row(i).transpose();
    res.noalias() -= wm.xtilde(i) * beta;
    quad += res.dot(fac.llt(i).solve(res));
  }
  const double h = fac.logdet_sum() + quad;
  if (!std::isfinite(h)) throw NumericError("working objective is not finite");
  return h;
}

Eigen::MatrixXd sigma_gradient(const WorkingModel& wm, const Factors& fac,
                               const Eigen::VectorXd& beta) {
  const int n = wm.n();
  const int r = wm.r();
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(r, r);
  Eigen::MatrixXd Cinv(r, r);
  Eigen::VectorXd res(r), u(r);
  for (int i = 0; i < n; ++i) {
    res = wm.ytilde().row(i).transpose();
    res.noalias() -= wm.xtilde(i) * beta;
    Cinv.setIdentity();
    fac.llt(i).solveInPlace(Cinv);
    u = Cinv * res;  // C_i^{-1} r_i
    const auto d = wm.dvec().row(i).transpose();
    grad.noalias() += d.asDiagonal() * (Cinv - u * u.transpose()) * d.asDiagonal();
  }
  if (!grad.allFinite()) throw NumericError("covariance gradient is not finite");
  return grad;
}

Eigen::VectorXd beta_gls(const WorkingModel& wm, const Factors& fac,
                         const std::vector<BetaRestriction>& restrictions) {
  const int n = wm.n();
  const int q = wm.q();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(q, q);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
  Eigen::MatrixXd CinvX(wm.r(), q);
  for (int i = 0; i < n; ++i) {
    CinvX = fac.llt(i).solve(wm.xtilde(i));
    A.noalias() += wm.xtilde(i).transpose() * CinvX;
    b.noalias() += CinvX.transpose() * wm.ytilde().row(i).transpose();
  }

  if (restrictions.empty()) {
    Eigen::LDLT<Eigen::MatrixXd> ldlt(A);
    if (ldlt.info() != Eigen::Success) {
      throw NumericError("normal equations for the coefficient update failed");
    }
    Eigen::VectorXd beta = ldlt.solve(b);
    if ((A * beta - b).norm() > 1e-6 * (1.0 + b.norm())) {
      throw NumericError("coefficient normal equations are singular; "
                         "check the design for collinearity");
    }
    return beta;
  }

  std::vector<bool> is_fixed(static_cast<std::size_t>(q), false);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  for (const auto& rst : restrictions) {
    if (rst.index < 0 || rst.index >= q) {
      throw SpecError("coefficient restriction index out of range");
    }
    if (is_fixed[static_cast<std::size_t>(rst.index)]) {
      throw SpecError("coefficient " + std::to_string(rst.index + 1) +
                      " restricted twice");
    }
    is_fixed[static_cast<std::size_t>(rst.index)] = true;
    beta(rst.index) = rst.value;
  }
  std::vector<int> free_idx;
  for (int k = 0; k < q; ++k) {
    if (!is_fixed[static_cast<std::size_t>(k)]) free_idx.push_back(k);
  }
  const int qf = static_cast<int>(free_idx.size());
  if (qf == 0) return beta;

  Eigen::MatrixXd Aff(qf, qf);
  Eigen::VectorXd bf(qf);
  for (int a = 0; a < qf; ++a) {
    double rhs = b(free_idx[a]);
    for (int k = 0; k < q; ++k) {
      if (is_fixed[static_cast<std::size_t>(k)]) {
        rhs -= A(free_idx[a], k) * beta(k);
      }
    }
    bf(a) = rhs;
    for (int c = 0; c < qf; ++c) Aff(a, c) = A(free_idx[a], free_idx[c]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt(Aff);
  if (ldlt.info() != Eigen::Success) {
    throw NumericError("restricted normal equations failed");
  }
  Eigen::VectorXd bfree = ldlt.solve(bf);
  if ((Aff * bfree - bf).norm() > 1e-6 * (1.0 + bf.norm())) {
    throw NumericError("restricted normal equations are singular");
  }
  for (int a = 0; a < qf; ++a) beta(free_idx[a]) = bfree(a);
  return beta;
}

}  // namespace mixedreg
