#include "mixedreg/fit.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>
#include <utility>

#include "mixedreg/errors.hpp"

namespace mixedreg {

namespace {

constexpr int kMaxHalvings = 60;
constexpr double kAcceptSlack = 1e-12;

// Tolerance for the non-increase assertions: exact minimizers can lose a few
// ulps through the factorizations.
double drift_tol(double h) { return 1e-8 * (1.0 + std::abs(h)); }

// Objective restricted to Sigma at fixed (w, beta). The residuals do not
// move, so a candidate evaluation refactorizes the conditional covariances
// only, and the gradient reuses the factorizations and solved residuals of
// the last accepted point. Trial state is kept apart from accepted state
// because rejected line search candidates must not clobber the cache.
class SigmaSurface {
 public:
  SigmaSurface(const WorkingModel& wm, const Eigen::VectorXd& beta)
      : wm_(&wm),
        n_(wm.n()),
        r_(wm.r()),
        res_(n_, r_),
        u_cur_(n_, r_),
        u_trial_(n_, r_),
        llt_cur_(static_cast<std::size_t>(n_), Eigen::LLT<Eigen::MatrixXd>(r_)),
        llt_trial_(static_cast<std::size_t>(n_), Eigen::LLT<Eigen::MatrixXd>(r_)) {
    for (int i = 0; i < n_; ++i) {
      res_.row(i) = wm.ytilde().row(i) - (wm.xtilde(i) * beta).transpose();
    }
  }

  // h at sigma, cached in the trial slot.
  double value(const Eigen::MatrixXd& sigma) {
    double logdet = 0.0;
    double quad = 0.0;
    Eigen::MatrixXd C(r_, r_);
    Eigen::VectorXd u(r_);
    for (int i = 0; i < n_; ++i) {
      const auto d = wm_->dvec().row(i);
      for (int a = 0; a < r_; ++a) {
        for (int b = 0; b < r_; ++b) C(a, b) = d(a) * sigma(a, b) * d(b);
        C(a, a) += wm_->psi()(a) * d(a);
      }
      llt_trial_[i].compute(C);
      if (llt_trial_[i].info() != Eigen::Success) {
        throw NumericError("conditional covariance of observation " +
                           std::to_string(i + 1) + " is not positive definite");
      }
      logdet += 2.0 * llt_trial_[i].matrixLLT().diagonal().array().log().sum();
      u = res_.row(i).transpose();
      llt_trial_[i].solveInPlace(u);
      quad += res_.row(i).dot(u);
      u_trial_.row(i) = u.transpose();
    }
    const double h = logdet + quad;
    if (!std::isfinite(h)) throw NumericError("working objective is not finite");
    return h;
  }

  void accept() {
    llt_cur_.swap(llt_trial_);
    u_cur_.swap(u_trial_);
  }

  // Gradient at the last accepted point.
  Eigen::MatrixXd grad() const {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(r_, r_);
    Eigen::MatrixXd Cinv(r_, r_);
    for (int i = 0; i < n_; ++i) {
      Cinv.setIdentity();
      llt_cur_[i].solveInPlace(Cinv);
      const auto d = wm_->dvec().row(i);
      const auto u = u_cur_.row(i);
      for (int a = 0; a < r_; ++a) {
        for (int b = 0; b < r_; ++b) {
          g(a, b) += d(a) * d(b) * (Cinv(a, b) - u(a) * u(b));
        }
      }
    }
    if (!g.allFinite()) throw NumericError("covariance gradient is not finite");
    return g;
  }

 private:
  const WorkingModel* wm_;
  int n_, r_;
  Eigen::MatrixXd res_;
  Eigen::MatrixXd u_cur_, u_trial_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt_cur_, llt_trial_;
};

}  // namespace

void validate_controls(const FitControls& ctl) {
  if (!(ctl.eps_beta > 0.0) || !(ctl.eps_sigma > 0.0) || !(ctl.inner_tol > 0.0) ||
      !(ctl.proj_tol > 0.0)) {
    throw SpecError("fit controls: tolerances must be positive");
  }
  if (!(ctl.gamma > 0.0 && ctl.gamma < 1.0)) {
    throw SpecError("fit controls: gamma must lie in (0,1)");
  }
  if (!(ctl.ls_shrink > 0.0 && ctl.ls_shrink < 1.0 && ctl.ls_grow > 1.0)) {
    throw SpecError("fit controls: need 0 < ls_shrink < 1 < ls_grow");
  }
  if (!(ctl.alpha_init > 0.0)) {
    throw SpecError("fit controls: alpha_init must be positive");
  }
  if (ctl.max_outer < 1 || ctl.max_inner < 1 || ctl.max_prox < 1 ||
      ctl.proj_maxiter < 1) {
    throw SpecError("fit controls: iteration caps must be at least 1");
  }
  if (!(ctl.latent.kappa > 0.0) || !(ctl.latent.tau >= 0.0) ||
      !(ctl.latent.grad_tol > 0.0)) {
    throw SpecError("latent controls: kappa > 0, tau >= 0, grad_tol > 0 required");
  }
  if (ctl.latent.threads < 1) {
    throw SpecError("latent controls: threads must be at least 1");
  }
}

Eigen::MatrixXd sigma_prox_descent(const WorkingModel& wm,
                                   const Eigen::VectorXd& beta,
                                   const Eigen::MatrixXd& sigma0,
                                   const ConstraintSpec& cspec,
                                   const FitControls& ctl, ProxInfo* info) {
  Eigen::MatrixXd sigma = sigma0;
  Eigen::MatrixXd sigma_prev = sigma0;  // zero momentum on the first step
  SigmaSurface surface(wm, beta);
  double h = surface.value(sigma);
  surface.accept();

  ProxInfo local;
  double alpha_start = ctl.alpha_init;
  Eigen::MatrixXd grad, cand;
  int t = 0;
  for (; t < ctl.max_prox; ++t) {
    grad = surface.grad();
    Eigen::MatrixXd momentum = ctl.gamma * (sigma - sigma_prev);

    // Cap the first probe so the trial displacement stays within one iterate
    // scale. A longer probe is never competitive and its projection pays for
    // the extra distance in alternating-projection sweeps.
    const double alpha_cap =
        (1.0 + sigma.norm()) / std::max(grad.norm(), 1e-300);
    double alpha = std::min(alpha_start, alpha_cap);
    bool accepted = false;
    double h_cand = h;
    // The inertia term does not scale with alpha, so it can block descent
    // outright near a stationary point; a failed search retries once with
    // the momentum dropped before the loop gives up.
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      alpha = std::min(alpha_start, alpha_cap);
      for (int m = 0; m < kMaxHalvings; ++m) {
        cand = project(sigma - alpha * grad + momentum, cspec, ctl.proj_tol,
                       ctl.proj_maxiter);
        bool ok = true;
        try {
          h_cand = surface.value(cand);
        } catch (const NumericError&) {
          ok = false;
        }
        if (ok && h_cand < h + kAcceptSlack) {
          accepted = true;
          break;
        }
        alpha *= ctl.ls_shrink;
      }
      if (!accepted) {
        if (momentum.isZero(0.0)) break;
        momentum.setZero();
      }
    }
    if (!accepted) {
      local.stalled = true;
      break;
    }
    alpha_start = alpha * ctl.ls_grow;
    sigma_prev = std::move(sigma);
    sigma = cand;
    surface.accept();
    const double change = std::abs(h_cand - h);
    h = h_cand;
    if (change < ctl.inner_tol * (1.0 + std::abs(h))) {
      ++t;
      break;
    }
  }
  local.iterations = t;
  local.h_final = h;
  local.next_alpha = alpha_start;
  if (info) *info = local;
  return sigma;
}

BcdResult bcd_beta_sigma(const WorkingModel& wm, const WorkingState& start,
                         const ConstraintSpec& cspec, const FitControls& ctl,
                         const std::vector<BetaRestriction>& restrictions,
                         std::vector<double>* htrace) {
  if (!start.beta.allFinite() || !start.sigma.allFinite()) {
    throw NumericError("starting state is not finite");
  }
  BcdResult res;
  res.beta = start.beta;
  res.sigma = start.sigma;

  Factors fac;
  fac.refresh(wm, res.sigma);
  double h = objective(wm, fac, res.beta);
  if (htrace) htrace->push_back(h);

  // The accepted step size carries across covariance descents; restarting
  // the search at alpha_init every cycle would pay the full halving ladder
  // again.
  FitControls prox_ctl = ctl;
  for (int cycle = 0; cycle < ctl.max_inner; ++cycle) {
    res.cycles = cycle + 1;

    res.beta = beta_gls(wm, fac, restrictions);
    const double h_beta = objective(wm, fac, res.beta);
    if (h_beta > h + drift_tol(h)) {
      throw NumericError("objective increased in the coefficient update");
    }
    if (htrace) htrace->push_back(h_beta);

    ProxInfo pinfo;
    res.sigma =
        sigma_prox_descent(wm, res.beta, res.sigma, cspec, prox_ctl, &pinfo);
    if (pinfo.next_alpha > 0.0) prox_ctl.alpha_init = pinfo.next_alpha;
    fac.refresh(wm, res.sigma);
    const double h_sigma = objective(wm, fac, res.beta);
    if (h_sigma > h_beta + drift_tol(h_beta)) {
      throw NumericError("objective increased in the covariance update");
    }
    if (htrace) htrace->push_back(h_sigma);

    const double change = std::abs(h_sigma - h);
    h = h_sigma;
    if (change < ctl.inner_tol * (1.0 + std::abs(h))) break;
  }
  res.h_final = h;
  return res;
}

Eigen::VectorXd initial_beta(const ModelSpec& model, const Dataset& data,
                             const std::vector<BetaRestriction>& restrictions) {
  const int n = data.n();
  const int r = model.r();
  const int q = data.q();

  std::vector<bool> is_fixed(static_cast<std::size_t>(q), false);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  for (const auto& rst : restrictions) {
    if (rst.index < 0 || rst.index >= q) {
      throw SpecError("coefficient restriction index out of range");
    }
    is_fixed[static_cast<std::size_t>(rst.index)] = true;
    beta(rst.index) = rst.value;
  }

  // Scalar-level IRLS with canonical links; every (i, j) cell is one GLM
  // observation with predictor row X_i(j, :). 25 reweighting passes are
  // plenty for a starting value.
  for (int pass = 0; pass < 25; ++pass) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(q, q);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(q);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < r; ++j) {
        const Family& f = model.families[j];
        const auto x = data.X[i].row(j);
        const double eta = x * beta;
        const double v = varweight(f, eta);
        if (v <= 1e-12) continue;
        const double weight = v / f.psi;
        const double z = eta + (data.y(i, j) - mean(f, eta)) / v;
        A.noalias() += weight * (x.transpose() * x);
        b.noalias() += (weight * z) * x.transpose();
      }
    }
    Eigen::VectorXd beta_new(q);
    if (restrictions.empty()) {
      beta_new = A.ldlt().solve(b);
    } else {
      std::vector<int> free_idx;
      for (int k = 0; k < q; ++k) {
        if (!is_fixed[static_cast<std::size_t>(k)]) free_idx.push_back(k);
      }
      const int qf = static_cast<int>(free_idx.size());
      beta_new = beta;
      if (qf > 0) {
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
        Eigen::VectorXd bfree = Aff.ldlt().solve(bf);
        for (int a = 0; a < qf; ++a) beta_new(free_idx[a]) = bfree(a);
      }
    }
    if (!beta_new.allFinite()) break;
    const double step = (beta_new - beta).squaredNorm();
    beta = beta_new;
    if (step < 1e-16) break;
  }
  if (!beta.allFinite()) {
    throw NumericError("starting coefficient estimate is not finite");
  }
  return beta;
}

Eigen::MatrixXd initial_sigma(const ConstraintSpec& cspec, const FitControls& ctl) {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(cspec.r, cspec.r);
  for (const auto& f : cspec.all_fixed()) {
    if (f.j == f.k) sigma(f.j, f.j) = f.value;
  }
  return project(sigma, cspec, ctl.proj_tol, ctl.proj_maxiter);
}

FitResult fit(const ModelSpec& model, const Dataset& data,
              const ConstraintSpec& cspec, const FitControls& ctl,
              const std::vector<BetaRestriction>& restrictions,
              const WorkingState* start) {
  validate_controls(ctl);
  validate_model(model);
  validate_data(model, data);
  validate_constraints(cspec);
  validate_identifiability(model, cspec);

  const int n = data.n();
  const int r = model.r();
  const int q = data.q();

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(q, q);
  for (int i = 0; i < n; ++i) {
    gram.noalias() += data.X[i].transpose() * data.X[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> geig(gram);
  if (geig.eigenvalues().minCoeff() <=
      1e-12 * std::max(1.0, geig.eigenvalues().maxCoeff())) {
    throw SpecError("stacked design Gram matrix is numerically singular");
  }

  FitResult out;
  if (start) {
    if (start->beta.size() != q || start->sigma.rows() != r ||
        start->sigma.cols() != r || start->w.rows() != n ||
        start->w.cols() != r) {
      throw SpecError("warm start dimensions do not match the data");
    }
    out.beta = start->beta;
    for (const auto& rst : restrictions) {
      if (rst.index < 0 || rst.index >= q) {
        throw SpecError("coefficient restriction index out of range");
      }
      out.beta(rst.index) = rst.value;
    }
    out.sigma = project(start->sigma, cspec, ctl.proj_tol, ctl.proj_maxiter);
    out.w = start->w;
  } else {
    out.beta = initial_beta(model, data, restrictions);
    out.sigma = initial_sigma(cspec, ctl);
    out.w.resize(n, r);
    for (int i = 0; i < n; ++i) {
      out.w.row(i) = (data.X[i] * out.beta).transpose();
    }
  }

  WorkingModel wm(model, data);
  bool latent_warned = false;
  for (int k = 0; k < ctl.max_outer; ++k) {
    out.outer_iters = k + 1;
    BatchLatentResult lat =
        update_latent_all(model, data, out.beta, out.sigma, ctl.latent, out.w);
    if (!lat.all_converged && !latent_warned) {
      out.warnings.push_back(
          "expansion point update hit its iteration cap (first at outer "
          "iteration " +
          std::to_string(k + 1) + ", gradient norm " +
          std::to_string(lat.max_grad_norm) + ")");
      latent_warned = true;
    }

    wm.refresh(out.w);
    WorkingState state{out.w, out.beta, out.sigma};
    BcdResult inner = bcd_beta_sigma(wm, state, cspec, ctl, restrictions);
    out.trace.push_back(inner.h_final);

    const double beta_step = (inner.beta - out.beta).squaredNorm();
    const double sigma_step = (inner.sigma - out.sigma).squaredNorm();
    out.beta = std::move(inner.beta);
    out.sigma = std::move(inner.sigma);
    if (beta_step <= ctl.eps_beta && sigma_step <= ctl.eps_sigma) {
      out.converged = true;
      break;
    }
  }
  if (!out.converged) {
    out.warnings.push_back("outer loop stopped at max_outer without meeting "
                           "the step tolerances");
  }

  wm.refresh(out.w);
  Factors fac;
  fac.refresh(wm, out.sigma);
  out.h_final = objective(wm, fac, out.beta);
  return out;
}

}  // namespace mixedreg
