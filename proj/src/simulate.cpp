#include "mixedreg/simulate.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <string>

#include "mixedreg/errors.hpp"
#include "mixedreg/inference.hpp"
#include "mixedreg/moments.hpp"

namespace mixedreg {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd spectral_sqrt(const Eigen::MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
  if (eig.info() != Eigen::Success) {
    throw NumericError("covariance eigendecomposition failed");
  }
  const Eigen::VectorXd root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

double sse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth,
           const std::vector<int>& cols) {
  double s = 0.0;
  for (int c : cols) s += (pred.col(c) - truth.col(c)).squaredNorm();
  return s;
}

}  // namespace

void validate_design(const SimDesign& design) {
  if (design.n < 1 || design.r < 1 || design.p < 1) {
    throw SpecError("design: n, r and p must be at least 1");
  }
  if (!(design.rho >= 0.0 && design.rho < 1.0)) {
    throw SpecError("design: rho must lie in [0,1)");
  }
  if (design.layout.empty()) {
    if (design.r % 3 != 0) {
      throw SpecError("design: the default type layout needs r divisible by 3");
    }
  } else if (static_cast<int>(design.layout.size()) != design.r) {
    throw SpecError("design: type layout length must equal r");
  }
  if (design.structure == SigmaStructure::BLOCK && design.r % 3 != 0) {
    throw SpecError("design: block structure needs r divisible by 3");
  }
  if (!(design.psi_gaussian > 0.0)) {
    throw SpecError("design: Gaussian dispersion must be positive");
  }
  if (design.second_coef_effect && design.p < 2) {
    throw SpecError("design: the second-coefficient effect needs p >= 2");
  }
}

std::vector<FamilyKind> design_layout(const SimDesign& design) {
  if (!design.layout.empty()) return design.layout;
  std::vector<FamilyKind> layout(static_cast<std::size_t>(design.r));
  const int third = design.r / 3;
  for (int j = 0; j < design.r; ++j) {
    layout[static_cast<std::size_t>(j)] =
        j < third ? FamilyKind::Gaussian
                  : (j < 2 * third ? FamilyKind::Bernoulli : FamilyKind::Poisson);
  }
  return layout;
}

ModelSpec design_model(const SimDesign& design) {
  ModelSpec model;
  for (FamilyKind kind : design_layout(design)) {
    switch (kind) {
      case FamilyKind::Gaussian:
        model.families.push_back(Family::gaussian(design.psi_gaussian));
        break;
      case FamilyKind::Poisson:
        model.families.push_back(Family::poisson());
        break;
      case FamilyKind::Bernoulli:
        model.families.push_back(Family::bernoulli());
        break;
    }
  }
  return model;
}

ConstraintSpec design_cspec(const SimDesign& design, bool diagonal) {
  ConstraintSpec cspec;
  cspec.r = design.r;
  cspec.eigen_floor = 0.0;
  const auto layout = design_layout(design);
  for (int j = 0; j < design.r; ++j) {
    if (layout[static_cast<std::size_t>(j)] == FamilyKind::Bernoulli) {
      cspec.fixed.push_back({j, j, 1.0});
    }
  }
  if (diagonal) {
    for (int j = 0; j < design.r; ++j) {
      for (int k = j + 1; k < design.r; ++k) {
        cspec.zeros.push_back({j, k});
      }
    }
  }
  return cspec;
}

Eigen::MatrixXd gen_sigma(SigmaStructure structure, double rho, int r) {
  if (!(rho >= 0.0 && rho < 1.0)) throw SpecError("rho must lie in [0,1)");
  if (r < 1) throw SpecError("r must be at least 1");
  Eigen::MatrixXd S(r, r);
  switch (structure) {
    case SigmaStructure::AR:
      for (int j = 0; j < r; ++j) {
        for (int k = 0; k < r; ++k) {
          S(j, k) = std::pow(rho, std::abs(j - k));
        }
      }
      break;
    case SigmaStructure::CS:
      S.setConstant(rho);
      S.diagonal().setOnes();
      break;
    case SigmaStructure::BLOCK: {
      if (r % 3 != 0) {
        throw SpecError("block structure needs r divisible by 3");
      }
      const int stride = r / 3;
      S.setZero();
      for (int j = 0; j < r; ++j) {
        for (int k = 0; k < r; ++k) {
          if (j == k) {
            S(j, k) = 1.0;
          } else if (j % stride == k % stride) {
            S(j, k) = rho;
          }
        }
      }
      break;
    }
  }
  S *= 0.5;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(S);
  if (eig.eigenvalues().minCoeff() < -1e-10) {
    throw SpecError("design covariance is not positive semidefinite");
  }
  return S;
}

Eigen::VectorXd draw_beta(const SimDesign& design, const Stream& stream) {
  const auto layout = design_layout(design);
  Eigen::VectorXd beta(design.r * design.p);
  for (int j = 0; j < design.r; ++j) {
    Stream bs = stream.child(static_cast<std::uint64_t>(j));
    beta(j * design.p) =
        layout[static_cast<std::size_t>(j)] == FamilyKind::Bernoulli ? 0.0 : 2.0;
    for (int l = 1; l < design.p; ++l) {
      const double bound = (l == 1 && design.second_coef_effect)
                               ? design.gamma_effect * 1e-2
                               : 0.5;
      beta(j * design.p + l) = bs.uniform(-bound, bound);
    }
  }
  return beta;
}

Dataset draw_data(const SimDesign& design, const Eigen::VectorXd& beta,
                  const Eigen::MatrixXd& sigma, const Stream& stream,
                  int n_obs) {
  const int r = design.r;
  const int p = design.p;
  const int q = r * p;
  if (beta.size() != q || sigma.rows() != r || sigma.cols() != r) {
    throw SpecError("draw_data: dimension mismatch");
  }
  const auto layout = design_layout(design);
  const Eigen::MatrixXd root = spectral_sqrt(sigma);

  Dataset data;
  data.y.resize(n_obs, r);
  data.X.reserve(static_cast<std::size_t>(n_obs));

  const Stream xroot = stream.child(0);
  const Stream wroot = stream.child(1);
  const Stream yroot = stream.child(2);
  Eigen::VectorXd z(r);
  for (int i = 0; i < n_obs; ++i) {
    Eigen::MatrixXd Xi = Eigen::MatrixXd::Zero(r, q);
    const Stream xi = xroot.child(static_cast<std::uint64_t>(i));
    if (design.shared_predictors) {
      Stream xs = xi;
      Eigen::VectorXd u(p - 1);
      for (int l = 0; l < p - 1; ++l) u(l) = xs.uniform(-1.0, 1.0);
      for (int j = 0; j < r; ++j) {
        Xi(j, j * p) = 1.0;
        for (int l = 0; l < p - 1; ++l) Xi(j, j * p + 1 + l) = u(l);
      }
    } else {
      for (int j = 0; j < r; ++j) {
        Stream xs = xi.child(static_cast<std::uint64_t>(j));
        Xi(j, j * p) = 1.0;
        for (int l = 0; l < p - 1; ++l) {
          Xi(j, j * p + 1 + l) = xs.uniform(-1.0, 1.0);
        }
      }
    }

    Stream ws = wroot.child(static_cast<std::uint64_t>(i));
    for (int j = 0; j < r; ++j) z(j) = ws.normal(0.0, 1.0);
    const Eigen::VectorXd w = Xi * beta + root * z;

    const Stream yi = yroot.child(static_cast<std::uint64_t>(i));
    for (int j = 0; j < r; ++j) {
      Stream ys = yi.child(static_cast<std::uint64_t>(j));
      Family f;
      switch (layout[static_cast<std::size_t>(j)]) {
        case FamilyKind::Gaussian:
          f = Family::gaussian(design.psi_gaussian);
          break;
        case FamilyKind::Poisson:
          f = Family::poisson();
          break;
        case FamilyKind::Bernoulli:
          f = Family::bernoulli();
          break;
      }
      data.y(i, j) = sample(f, w(j), ys);
    }
    data.X.push_back(std::move(Xi));
  }
  return data;
}

GeneratedData gen_dataset(const SimDesign& design) {
  validate_design(design);
  GeneratedData out;
  out.sigma = gen_sigma(design.structure, design.rho, design.r);
  const Stream master(design.seed);
  out.beta = draw_beta(design, master.child(0));
  out.data = draw_data(design, out.beta, out.sigma, master.child(1), design.n);
  return out;
}

PredictionExperimentResult run_prediction_experiment(const SimDesign& design,
                                                     int reps, int n_test,
                                                     const FitControls& ctl) {
  validate_design(design);
  if (reps < 1) throw SpecError("prediction experiment needs reps >= 1");
  if (n_test < 1) throw SpecError("prediction experiment needs n_test >= 1");

  const ModelSpec model = design_model(design);
  const ConstraintSpec cfull = design_cspec(design, false);
  const ConstraintSpec cdiag = design_cspec(design, true);
  const Eigen::MatrixXd sigma_true =
      gen_sigma(design.structure, design.rho, design.r);
  const auto layout = design_layout(design);

  std::array<std::vector<int>, 3> cols_by_kind;
  std::vector<int> all_cols;
  for (int j = 0; j < design.r; ++j) {
    cols_by_kind[static_cast<std::size_t>(layout[static_cast<std::size_t>(j)])]
        .push_back(j);
    all_cols.push_back(j);
  }

  PredictionExperimentResult out;
  out.reps_requested = reps;
  std::array<double, 3> full_kind_sum{};
  std::array<double, 3> diag_kind_sum{};
  double full_sum = 0.0;
  double diag_sum = 0.0;

  for (int rep = 0; rep < reps; ++rep) {
    const Stream rs = Stream(design.seed).child(static_cast<std::uint64_t>(rep));
    const Eigen::VectorXd beta = draw_beta(design, rs.child(0));
    const Dataset train =
        draw_data(design, beta, sigma_true, rs.child(1), design.n);
    const Dataset test =
        draw_data(design, beta, sigma_true, rs.child(2), n_test);

    FitResult ffull, fdiag;
    try {
      ffull = fit(model, train, cfull, ctl);
      fdiag = fit(model, train, cdiag, ctl);
    } catch (const NumericError&) {
      ++out.fit_failures;
      continue;
    } catch (const SpecError&) {
      ++out.fit_failures;
      continue;
    }

    const Eigen::MatrixXd oracle = predict(model, beta, sigma_true, test.X);
    const Eigen::MatrixXd pfull = predict(model, ffull.beta, ffull.sigma, test.X);
    const Eigen::MatrixXd pdiag = predict(model, fdiag.beta, fdiag.sigma, test.X);

    const double oracle_all = sse(oracle, test.y, all_cols);
    out.full_ratio.push_back(sse(pfull, test.y, all_cols) / oracle_all);
    out.diag_ratio.push_back(sse(pdiag, test.y, all_cols) / oracle_all);
    full_sum += out.full_ratio.back();
    diag_sum += out.diag_ratio.back();
    std::array<double, 3> fk{kNan, kNan, kNan};
    std::array<double, 3> dk{kNan, kNan, kNan};
    for (std::size_t kind = 0; kind < 3; ++kind) {
      if (cols_by_kind[kind].empty()) continue;
      const double okind = sse(oracle, test.y, cols_by_kind[kind]);
      fk[kind] = sse(pfull, test.y, cols_by_kind[kind]) / okind;
      dk[kind] = sse(pdiag, test.y, cols_by_kind[kind]) / okind;
      full_kind_sum[kind] += fk[kind];
      diag_kind_sum[kind] += dk[kind];
    }
    out.full_kind_ratio.push_back(fk);
    out.diag_kind_ratio.push_back(dk);
    ++out.reps_done;
  }

  const double denom = out.reps_done > 0 ? out.reps_done : 1;
  out.full_mean = out.reps_done ? full_sum / denom : kNan;
  out.diag_mean = out.reps_done ? diag_sum / denom : kNan;
  for (std::size_t kind = 0; kind < 3; ++kind) {
    const bool present = !cols_by_kind[kind].empty() && out.reps_done > 0;
    out.full_mean_by_kind[kind] = present ? full_kind_sum[kind] / denom : kNan;
    out.diag_mean_by_kind[kind] = present ? diag_kind_sum[kind] / denom : kNan;
  }
  return out;
}

LrtExperimentResult run_lrt_experiment(const SimDesign& design, int reps,
                                       LrtKind kind, const FitControls& ctl) {
  validate_design(design);
  if (reps < 1) throw SpecError("test experiment needs reps >= 1");
  if (kind == LrtKind::BetaRow && !design.shared_predictors) {
    throw SpecError("the coefficient-row experiment needs shared predictors");
  }
  if (kind == LrtKind::BetaRow && design.p < 2) {
    throw SpecError("the coefficient-row experiment needs p >= 2");
  }

  const ModelSpec model = design_model(design);
  const Eigen::MatrixXd sigma_true =
      gen_sigma(design.structure, design.rho, design.r);

  Hypothesis hyp;
  if (kind == LrtKind::SigmaDiag) {
    hyp.null_cspec = design_cspec(design, true);
    hyp.alt_cspec = design_cspec(design, false);
  } else {
    hyp.null_cspec = design_cspec(design, false);
    hyp.alt_cspec = hyp.null_cspec;
    for (int j = 0; j < design.r; ++j) {
      hyp.beta_restrictions.push_back({j * design.p + 1, 0.0});
    }
  }

  LrtExperimentResult out;
  out.reps_requested = reps;
  for (int rep = 0; rep < reps; ++rep) {
    const Stream rs = Stream(design.seed).child(static_cast<std::uint64_t>(rep));
    const Eigen::VectorXd beta = draw_beta(design, rs.child(0));
    const Dataset data =
        draw_data(design, beta, sigma_true, rs.child(1), design.n);
    TestResult res;
    try {
      res = lrt(model, data, hyp, ctl);
    } catch (const NumericError&) {
      ++out.fit_failures;
      continue;
    } catch (const SpecError&) {
      ++out.fit_failures;
      continue;
    }
    out.pvalues.push_back(res.p_value);
    out.tstats.push_back(res.T);
    if (res.p_value < 0.05) ++out.rejections;
    ++out.reps_done;
  }
  if (out.reps_done > 0) {
    out.rejection_rate = static_cast<double>(out.rejections) / out.reps_done;
    out.mc_se = std::sqrt(out.rejection_rate * (1.0 - out.rejection_rate) /
                          out.reps_done);
  }
  return out;
}

}  // namespace mixedreg
