#include "mixedreg/simulate.hpp"

#include <cmath>

#include "doctest.h"
#include "mixedreg/errors.hpp"

using namespace mixedreg;

namespace {

FitControls experiment_controls() {
  FitControls ctl;
  ctl.gamma = 0.9;
  ctl.inner_tol = 1e-8;
  ctl.max_inner = 40;
  ctl.max_prox = 200;
  return ctl;
}

bool bitwise_equal(const Dataset& a, const Dataset& b) {
  if (a.y.rows() != b.y.rows() || a.y.cols() != b.y.cols()) return false;
  for (int i = 0; i < a.y.rows(); ++i) {
    for (int j = 0; j < a.y.cols(); ++j) {
      if (a.y(i, j) != b.y(i, j)) return false;
    }
  }
  for (std::size_t i = 0; i < a.X.size(); ++i) {
    if ((a.X[i] - b.X[i]).cwiseAbs().maxCoeff() != 0.0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("covariance structures follow their definitions") {
  SUBCASE("independent and compound symmetric") {
    Eigen::MatrixXd indep = gen_sigma(SigmaStructure::AR, 0.0, 4);
    CHECK((indep - 0.5 * Eigen::MatrixXd::Identity(4, 4))
              .cwiseAbs()
              .maxCoeff() == 0.0);
    Eigen::MatrixXd cs = gen_sigma(SigmaStructure::CS, 0.5, 3);
    Eigen::MatrixXd want(3, 3);
    want << 0.5, 0.25, 0.25, 0.25, 0.5, 0.25, 0.25, 0.25, 0.5;
    CHECK((cs - want).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("autoregressive decay") {
    Eigen::MatrixXd ar = gen_sigma(SigmaStructure::AR, 0.6, 4);
    CHECK(std::abs(ar(0, 3) - 0.5 * 0.6 * 0.6 * 0.6) < 1e-15);
    CHECK(std::abs(ar(1, 2) - 0.3) < 1e-15);
    CHECK((ar - ar.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("block pattern ties one coordinate of each type") {
    Eigen::MatrixXd blk = gen_sigma(SigmaStructure::BLOCK, 0.9, 9);
    CHECK(blk(0, 3) == 0.45);
    CHECK(blk(0, 6) == 0.45);
    CHECK(blk(0, 1) == 0.0);
    CHECK(blk(4, 7) == 0.45);
    for (int j = 0; j < 9; ++j) {
      CHECK(blk(j, j) == 0.5);
      for (int k = 0; k < 9; ++k) {
        if (j != k && j % 3 != k % 3) CHECK(blk(j, k) == 0.0);
      }
    }
  }
  SUBCASE("rejected inputs") {
    CHECK_THROWS_AS(gen_sigma(SigmaStructure::AR, 1.0, 3), SpecError);
    CHECK_THROWS_AS(gen_sigma(SigmaStructure::CS, -0.1, 3), SpecError);
    CHECK_THROWS_AS(gen_sigma(SigmaStructure::BLOCK, 0.5, 4), SpecError);
    CHECK_THROWS_AS(gen_sigma(SigmaStructure::AR, 0.5, 0), SpecError);
  }
}

TEST_CASE("default layout splits responses into thirds") {
  SimDesign design;
  design.r = 9;
  auto layout = design_layout(design);
  for (int j = 0; j < 3; ++j) CHECK(layout[j] == FamilyKind::Gaussian);
  for (int j = 3; j < 6; ++j) CHECK(layout[j] == FamilyKind::Bernoulli);
  for (int j = 6; j < 9; ++j) CHECK(layout[j] == FamilyKind::Poisson);

  ModelSpec model = design_model(design);
  CHECK(model.families[0].psi == 0.01);
  CHECK(model.families[3].kind == FamilyKind::Bernoulli);
  CHECK(model.families[6].kind == FamilyKind::Poisson);
  CHECK(model.families[6].psi == 1.0);

  ConstraintSpec cfull = design_cspec(design, false);
  CHECK(cfull.fixed.size() == 3);
  for (const auto& f : cfull.fixed) {
    CHECK(f.j == f.k);
    CHECK(f.j >= 3);
    CHECK(f.j < 6);
    CHECK(f.value == 1.0);
  }
  CHECK(cfull.zeros.empty());
  ConstraintSpec cdiag = design_cspec(design, true);
  CHECK(cdiag.zeros.size() == 36);
}

TEST_CASE("design validation rejects inconsistent settings") {
  auto bad = [](auto mutate) {
    SimDesign d;
    d.r = 3;
    d.p = 2;
    mutate(d);
    CHECK_THROWS_AS(validate_design(d), SpecError);
  };
  bad([](SimDesign& d) { d.n = 0; });
  bad([](SimDesign& d) { d.p = 0; });
  bad([](SimDesign& d) { d.rho = 1.0; });
  bad([](SimDesign& d) { d.rho = -0.2; });
  bad([](SimDesign& d) { d.r = 5; });
  bad([](SimDesign& d) { d.layout = {FamilyKind::Gaussian}; });
  bad([](SimDesign& d) { d.psi_gaussian = 0.0; });
  bad([](SimDesign& d) {
    d.second_coef_effect = true;
    d.p = 1;
  });
  bad([](SimDesign& d) {
    d.structure = SigmaStructure::BLOCK;
    d.r = 4;
    d.layout = {FamilyKind::Gaussian, FamilyKind::Gaussian,
                FamilyKind::Gaussian, FamilyKind::Gaussian};
  });
}

TEST_CASE("coefficient draws follow the declared scheme") {
  SimDesign design;
  design.r = 3;
  design.p = 3;
  design.seed = 11;
  Eigen::VectorXd beta = draw_beta(design, rng::Stream(5));
  CHECK(beta(0) == 2.0);  // Gaussian intercept
  CHECK(beta(3) == 0.0);  // Bernoulli intercept
  CHECK(beta(6) == 2.0);  // Poisson intercept
  for (int j = 0; j < 3; ++j) {
    for (int l = 1; l < 3; ++l) {
      CHECK(std::abs(beta(j * 3 + l)) <= 0.5);
    }
  }

  design.second_coef_effect = true;
  design.gamma_effect = 3.0;
  Eigen::VectorXd shrunk = draw_beta(design, rng::Stream(5));
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(shrunk(j * 3 + 1)) <= 0.03);
    CHECK(std::abs(shrunk(j * 3 + 2)) <= 0.5);
  }

  design.gamma_effect = 0.0;
  Eigen::VectorXd null_row = draw_beta(design, rng::Stream(5));
  for (int j = 0; j < 3; ++j) CHECK(null_row(j * 3 + 1) == 0.0);
}

TEST_CASE("shared-predictor designs reuse one predictor vector per row") {
  SimDesign design;
  design.r = 3;
  design.p = 2;
  design.shared_predictors = true;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(6);
  Eigen::MatrixXd sigma = 0.5 * Eigen::MatrixXd::Identity(3, 3);
  design.layout = {FamilyKind::Gaussian, FamilyKind::Gaussian,
                   FamilyKind::Gaussian};
  Dataset data = draw_data(design, beta, sigma, rng::Stream(9), 5);
  for (int i = 0; i < 5; ++i) {
    const Eigen::MatrixXd& Xi = data.X[i];
    CHECK(Xi(0, 0) == 1.0);
    CHECK(Xi(1, 2) == 1.0);
    CHECK(Xi(2, 4) == 1.0);
    CHECK(Xi(0, 1) == Xi(1, 3));
    CHECK(Xi(0, 1) == Xi(2, 5));
    CHECK(Xi(0, 2) == 0.0);
    CHECK(Xi(1, 0) == 0.0);
  }
}

TEST_CASE("datasets are reproducible and prefix-stable") {
  SimDesign design;
  design.n = 60;
  design.r = 3;
  design.p = 2;
  design.rho = 0.4;
  design.seed = 321;

  GeneratedData a = gen_dataset(design);
  GeneratedData b = gen_dataset(design);
  CHECK(bitwise_equal(a.data, b.data));
  CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.sigma - b.sigma).cwiseAbs().maxCoeff() == 0.0);

  design.seed = 322;
  GeneratedData c = gen_dataset(design);
  CHECK_FALSE(bitwise_equal(a.data, c.data));

  // Drawing a longer sample from the same stream leaves the shared prefix
  // bit-identical: observation streams are keyed by index, not order.
  Dataset d40 = draw_data(design, a.beta, a.sigma, rng::Stream(77), 40);
  Dataset d80 = draw_data(design, a.beta, a.sigma, rng::Stream(77), 80);
  for (int i = 0; i < 40; ++i) {
    CHECK((d40.X[i] - d80.X[i]).cwiseAbs().maxCoeff() == 0.0);
    for (int j = 0; j < 3; ++j) CHECK(d40.y(i, j) == d80.y(i, j));
  }
}

TEST_CASE("independent latents leave responses uncorrelated") {
  // All-Gaussian layout with a tiny noise floor, so the responses proxy the
  // latent vectors directly.
  SimDesign design;
  design.n = 100000;
  design.r = 3;
  design.p = 1;
  design.rho = 0.0;
  design.seed = 99;
  design.layout = {FamilyKind::Gaussian, FamilyKind::Gaussian,
                   FamilyKind::Gaussian};
  GeneratedData gen = gen_dataset(design);

  Eigen::VectorXd mean = gen.data.y.colwise().mean();
  Eigen::MatrixXd centered = gen.data.y.rowwise() - mean.transpose();
  Eigen::MatrixXd cov =
      centered.transpose() * centered / (design.n - 1);
  for (int j = 0; j < 3; ++j) {
    CAPTURE(j);
    CHECK(std::abs(cov(j, j) - 0.51) < 0.01);
    CHECK(std::abs(mean(j) - 2.0) < 0.01);
    for (int k = 0; k < j; ++k) {
      const double cor = cov(j, k) / std::sqrt(cov(j, j) * cov(k, k));
      CHECK(std::abs(cor) < 0.01);
    }
  }
}

TEST_CASE("prediction experiment separates full and diagonal fits") {
  SimDesign design;
  design.n = 150;
  design.r = 6;
  design.p = 4;
  design.rho = 0.9;
  design.structure = SigmaStructure::AR;
  design.seed = 2718;

  PredictionExperimentResult res =
      run_prediction_experiment(design, 8, 500, experiment_controls());
  CHECK(res.reps_requested == 8);
  CHECK(res.reps_done == 8);
  CHECK(res.fit_failures == 0);
  REQUIRE(res.full_ratio.size() == 8);
  REQUIRE(res.diag_ratio.size() == 8);
  for (int rep = 0; rep < 8; ++rep) {
    CHECK(res.full_ratio[rep] > 0.0);
    CHECK(res.diag_ratio[rep] > 0.0);
    for (std::size_t kind = 0; kind < 3; ++kind) {
      CHECK(std::isfinite(res.full_kind_ratio[rep][kind]));
      CHECK(std::isfinite(res.diag_kind_ratio[rep][kind]));
    }
  }
  // Strong latent correlation is exactly what the diagonal fit cannot use.
  CHECK(res.full_mean < res.diag_mean);
  CHECK(res.full_mean > 0.95);
}

TEST_CASE("without latent correlation both fits predict alike") {
  SimDesign design;
  design.n = 120;
  design.r = 3;
  design.p = 2;
  design.rho = 0.0;
  design.seed = 1414;

  PredictionExperimentResult res =
      run_prediction_experiment(design, 6, 400, experiment_controls());
  CHECK(res.reps_done == 6);
  CHECK(std::abs(res.full_mean - res.diag_mean) <
        0.1 * std::max(res.diag_mean, 1.0));

  PredictionExperimentResult rerun =
      run_prediction_experiment(design, 6, 400, experiment_controls());
  REQUIRE(rerun.full_ratio.size() == res.full_ratio.size());
  for (std::size_t i = 0; i < res.full_ratio.size(); ++i) {
    CHECK(rerun.full_ratio[i] == res.full_ratio[i]);
    CHECK(rerun.diag_ratio[i] == res.diag_ratio[i]);
  }
}

TEST_CASE("coefficient-row test holds its size under the null") {
  SimDesign design;
  design.n = 250;
  design.r = 3;
  design.p = 2;
  design.rho = 0.5;
  design.seed = 424;
  design.shared_predictors = true;
  design.second_coef_effect = true;
  design.gamma_effect = 0.0;  // restricted coefficients are exactly zero

  LrtExperimentResult res =
      run_lrt_experiment(design, 25, LrtKind::BetaRow, experiment_controls());
  CHECK(res.reps_done == 25);
  CHECK(res.fit_failures == 0);
  CHECK(res.rejection_rate <= 0.2);
  REQUIRE(res.pvalues.size() == 25);
  for (double t : res.tstats) CHECK(t >= -1e-8);

  LrtExperimentResult rerun =
      run_lrt_experiment(design, 25, LrtKind::BetaRow, experiment_controls());
  for (std::size_t i = 0; i < res.pvalues.size(); ++i) {
    CHECK(rerun.pvalues[i] == res.pvalues[i]);
  }
}

TEST_CASE("experiment preconditions are enforced") {
  SimDesign design;
  design.r = 3;
  design.p = 2;
  CHECK_THROWS_AS(run_prediction_experiment(design, 0, 100), SpecError);
  CHECK_THROWS_AS(run_prediction_experiment(design, 2, 0), SpecError);
  CHECK_THROWS_AS(run_lrt_experiment(design, 0, LrtKind::SigmaDiag), SpecError);
  // Coefficient-row testing requires the shared-predictor layout.
  CHECK_THROWS_AS(run_lrt_experiment(design, 2, LrtKind::BetaRow), SpecError);
  design.shared_predictors = true;
  design.p = 1;
  CHECK_THROWS_AS(run_lrt_experiment(design, 2, LrtKind::BetaRow), SpecError);
}
