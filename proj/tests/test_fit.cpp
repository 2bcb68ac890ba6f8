#include <doctest.h>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mixedreg/errors.hpp"
#include "mixedreg/fit.hpp"
#include "mixedreg/latent_solver.hpp"
#include "mixedreg/simulate.hpp"
#include "support.hpp"

using namespace mixedreg;
using testsupport::GaussianInstance;
using testsupport::gaussian_instance;
using testsupport::gaussian_mle;

namespace {

// Tight inner loops resolve the block coordinate fixed point well past the
// comparison tolerances; the outer tolerances stay above the floor set by
// restarting those loops, or the convergence flag could never latch.
FitControls tight_controls() {
  FitControls ctl;
  ctl.eps_beta = 1e-12;
  ctl.eps_sigma = 1e-12;
  ctl.inner_tol = 1e-14;
  ctl.max_inner = 400;
  ctl.max_prox = 20000;
  return ctl;
}

SimDesign mixed_design(std::uint64_t seed, int n) {
  SimDesign design;
  design.n = n;
  design.r = 3;
  design.p = 2;
  design.structure = SigmaStructure::AR;
  design.rho = 0.5;
  design.seed = seed;
  return design;
}

Dataset permuted(const Dataset& data, std::uint64_t seed) {
  std::vector<int> perm(static_cast<std::size_t>(data.n()));
  std::iota(perm.begin(), perm.end(), 0);
  rng::Stream stream(seed);
  std::shuffle(perm.begin(), perm.end(), stream.engine());
  Dataset out;
  out.y.resize(data.n(), data.r());
  out.X.resize(static_cast<std::size_t>(data.n()));
  for (int i = 0; i < data.n(); ++i) {
    out.y.row(i) = data.y.row(perm[static_cast<std::size_t>(i)]);
    out.X[static_cast<std::size_t>(i)] = data.X[perm[static_cast<std::size_t>(i)]];
  }
  return out;
}

double min_eigenvalue(const Eigen::MatrixXd& S) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("all-Gaussian fit reaches the exact maximum likelihood") {
  const GaussianInstance inst =
      gaussian_instance(101, 160, 3, 2, {0.25, 0.5, 0.1});
  const auto oracle = gaussian_mle(inst.data, inst.psi);
  REQUIRE(oracle.converged);
  // The oracle is exact only while the cone clamp stays slack.
  REQUIRE(min_eigenvalue(oracle.sigma) > 0.05);

  ConstraintSpec cspec;
  cspec.r = 3;
  const FitControls ctl = tight_controls();
  const FitResult res = fit(inst.model, inst.data, cspec, ctl);
  CHECK(res.converged);
  CHECK((res.beta - oracle.beta).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK((res.sigma - oracle.sigma).lpNorm<Eigen::Infinity>() < 1e-5);

  // Identity links make the objective independent of the expansion points,
  // so the full loop collapses to one block coordinate descent.
  WorkingModel wm(inst.model, inst.data);
  wm.refresh(Eigen::MatrixXd::Zero(inst.data.n(), 3));
  WorkingState start{Eigen::MatrixXd::Zero(inst.data.n(), 3),
                     initial_beta(inst.model, inst.data),
                     initial_sigma(cspec, ctl)};
  const BcdResult inner = bcd_beta_sigma(wm, start, cspec, ctl);
  CHECK((inner.beta - res.beta).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK((inner.sigma - res.sigma).lpNorm<Eigen::Infinity>() < 1e-6);

  Factors fac;
  fac.refresh(wm, res.sigma);
  const double h_any_w = objective(wm, fac, res.beta);
  CHECK(std::abs(h_any_w - res.h_final) <= 1e-10 * (1.0 + std::abs(h_any_w)));
}

TEST_CASE("covariance descent finds the residual second-moment stationary point") {
  const GaussianInstance inst =
      gaussian_instance(202, 200, 3, 2, {0.3, 0.3, 0.3});
  WorkingModel wm(inst.model, inst.data);
  wm.refresh(Eigen::MatrixXd::Zero(inst.data.n(), 3));

  Factors fac;
  fac.refresh(wm, Eigen::MatrixXd::Identity(3, 3));
  const Eigen::VectorXd beta = beta_gls(wm, fac);

  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(3, 3);
  for (int i = 0; i < inst.data.n(); ++i) {
    const Eigen::VectorXd res =
        inst.data.y.row(i).transpose() - inst.data.X[static_cast<std::size_t>(i)] * beta;
    S.noalias() += res * res.transpose();
  }
  S /= inst.data.n();
  const Eigen::MatrixXd oracle = S - Eigen::MatrixXd(inst.psi.asDiagonal());
  REQUIRE(min_eigenvalue(oracle) > 0.05);

  // The analytic stationary point has a vanishing matrix gradient.
  Factors fo;
  fo.refresh(wm, oracle);
  CHECK(sigma_gradient(wm, fo, beta).lpNorm<Eigen::Infinity>() < 1e-8);

  ConstraintSpec cspec;
  cspec.r = 3;
  ProxInfo info;
  const Eigen::MatrixXd sig =
      sigma_prox_descent(wm, beta, Eigen::MatrixXd::Identity(3, 3), cspec,
                         tight_controls(), &info);
  CHECK_FALSE(info.stalled);
  CHECK((sig - oracle).lpNorm<Eigen::Infinity>() < 1e-4);

  SUBCASE("stationary feasible start is a fixed point") {
    ProxInfo again;
    const Eigen::MatrixXd sig2 = sigma_prox_descent(
        wm, beta, oracle, cspec, tight_controls(), &again);
    CHECK(again.iterations <= 2);
    CHECK((sig2 - oracle).lpNorm<Eigen::Infinity>() < 1e-6);
  }
}

TEST_CASE("zero constraints hold exactly through the covariance update") {
  const GaussianInstance inst = gaussian_instance(303, 90, 2, 2, {0.4, 0.2});
  ConstraintSpec cspec;
  cspec.r = 2;
  cspec.zeros.push_back({0, 1});

  WorkingModel wm(inst.model, inst.data);
  wm.refresh(Eigen::MatrixXd::Zero(inst.data.n(), 2));
  Factors fac;
  const FitControls ctl = tight_controls();
  const Eigen::MatrixXd sigma0 = initial_sigma(cspec, ctl);
  fac.refresh(wm, sigma0);
  const Eigen::VectorXd beta = beta_gls(wm, fac);
  const Eigen::MatrixXd sig =
      sigma_prox_descent(wm, beta, sigma0, cspec, ctl);
  CHECK(sig(0, 1) == 0.0);
  CHECK(sig(1, 0) == 0.0);

  const FitResult res = fit(inst.model, inst.data, cspec, ctl);
  CHECK(res.converged);
  CHECK(res.sigma(0, 1) == 0.0);
}

TEST_CASE("latent Poisson intercept stays near the truth at scale") {
  const int n = 10000;
  rng::Stream stream(7);
  ModelSpec model;
  model.families.push_back(Family::poisson());
  Eigen::MatrixXd y(n, 1);
  const Family pois = Family::poisson();
  for (int i = 0; i < n; ++i) {
    const double w = stream.normal(2.0, 0.5);
    y(i, 0) = sample(pois, w, stream);
  }
  const Dataset data = make_kronecker_dataset(y, Eigen::MatrixXd::Ones(n, 1));

  // The marginal moment estimate carries the lognormal bias exp(var/2).
  const Eigen::VectorXd marginal = initial_beta(model, data);
  CHECK(std::abs(marginal(0) - 2.0) > 0.1);

  ConstraintSpec cspec;
  cspec.r = 1;
  const FitResult res = fit(model, data, cspec);
  CHECK(res.converged);
  CHECK(std::abs(res.beta(0) - 2.0) < 0.1);
  CHECK(res.sigma(0, 0) > 0.1);
  CHECK(res.sigma(0, 0) < 0.45);
}

TEST_CASE("objective is non-increasing through every half step") {
  const SimDesign design = mixed_design(17, 80);
  const GeneratedData gen = gen_dataset(design);
  const ModelSpec model = design_model(design);
  const ConstraintSpec cspec = design_cspec(design, false);
  const FitControls ctl;

  const Eigen::VectorXd beta0 = initial_beta(model, gen.data);
  const Eigen::MatrixXd sigma0 = initial_sigma(cspec, ctl);
  Eigen::MatrixXd w(gen.data.n(), design.r);
  for (int i = 0; i < gen.data.n(); ++i) {
    w.row(i) = (gen.data.X[static_cast<std::size_t>(i)] * beta0).transpose();
  }
  update_latent_all(model, gen.data, beta0, sigma0, ctl.latent, w);

  WorkingModel wm(model, gen.data);
  wm.refresh(w);
  std::vector<double> htrace;
  bcd_beta_sigma(wm, {w, beta0, sigma0}, cspec, ctl, {}, &htrace);
  REQUIRE(htrace.size() >= 3);
  for (std::size_t t = 1; t < htrace.size(); ++t) {
    CHECK(htrace[t] <= htrace[t - 1] + 1e-8 * (1.0 + std::abs(htrace[t - 1])));
  }
}

TEST_CASE("mixed fit satisfies its constraints and recomputes its objective") {
  const SimDesign design = mixed_design(29, 120);
  const GeneratedData gen = gen_dataset(design);
  const ModelSpec model = design_model(design);
  const ConstraintSpec cspec = design_cspec(design, false);

  const FitResult res = fit(model, gen.data, cspec);
  CHECK(res.converged);
  CHECK(res.warnings.empty());
  CHECK(static_cast<int>(res.trace.size()) == res.outer_iters);

  // Response 2 is the Bernoulli coordinate under the thirds layout.
  CHECK(res.sigma(1, 1) == 1.0);
  CHECK(satisfies(res.sigma, cspec, 1e-8));
  CHECK(min_eigenvalue(res.sigma) >= cspec.eigen_floor - 1e-8);

  WorkingModel wm(model, gen.data);
  wm.refresh(res.w);
  Factors fac;
  fac.refresh(wm, res.sigma);
  const double h = objective(wm, fac, res.beta);
  CHECK(std::abs(h - res.h_final) <= 1e-10 * (1.0 + std::abs(h)));
}

TEST_CASE("nine-response synthetic fit converges within the iteration budget") {
  SimDesign design;
  design.n = 200;
  design.r = 9;
  design.p = 5;
  design.structure = SigmaStructure::AR;
  design.rho = 0.9;
  design.seed = 42;
  const GeneratedData gen = gen_dataset(design);
  const ModelSpec model = design_model(design);
  const ConstraintSpec cspec = design_cspec(design, false);

  const FitResult res = fit(model, gen.data, cspec);
  CHECK(res.converged);
  CHECK(res.outer_iters <= 100);
  for (int j = 3; j < 6; ++j) CHECK(res.sigma(j, j) == 1.0);
  CHECK(min_eigenvalue(res.sigma) >= -1e-8);
}

TEST_CASE("refitting from the solution stops immediately") {
  const SimDesign design = mixed_design(11, 60);
  const GeneratedData gen = gen_dataset(design);
  const ModelSpec model = design_model(design);
  const ConstraintSpec cspec = design_cspec(design, false);

  FitControls ctl = tight_controls();
  ctl.max_prox = 5000;
  const FitResult res = fit(model, gen.data, cspec, ctl);
  REQUIRE(res.converged);
  const WorkingState warm{res.w, res.beta, res.sigma};
  const FitResult again = fit(model, gen.data, cspec, ctl, {}, &warm);
  CHECK(again.converged);
  CHECK(again.outer_iters <= 2);
  CHECK((again.beta - res.beta).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK((again.sigma - res.sigma).lpNorm<Eigen::Infinity>() < 1e-6);
}

TEST_CASE("observation order does not change the estimates") {
  const SimDesign design = mixed_design(23, 50);
  const GeneratedData gen = gen_dataset(design);
  const ModelSpec model = design_model(design);
  const ConstraintSpec cspec = design_cspec(design, false);
  FitControls ctl;
  ctl.eps_beta = 1e-12;
  ctl.eps_sigma = 1e-12;

  const FitResult a = fit(model, gen.data, cspec, ctl);
  const FitResult b = fit(model, permuted(gen.data, 99), cspec, ctl);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK((a.beta - b.beta).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((a.sigma - b.sigma).lpNorm<Eigen::Infinity>() < 1e-8);
}

TEST_CASE("coefficient restrictions pin their coordinates") {
  const GaussianInstance inst = gaussian_instance(31, 80, 2, 2, {0.4, 0.4});
  const std::vector<BetaRestriction> restrictions{{1, 0.25}, {3, 0.0}};
  const auto oracle = gaussian_mle(inst.data, inst.psi, false, restrictions);
  REQUIRE(oracle.converged);
  REQUIRE(min_eigenvalue(oracle.sigma) > 0.05);

  ConstraintSpec cspec;
  cspec.r = 2;
  const FitResult res =
      fit(inst.model, inst.data, cspec, tight_controls(), restrictions);
  CHECK(res.converged);
  CHECK(res.beta(1) == 0.25);
  CHECK(res.beta(3) == 0.0);
  CHECK((res.beta - oracle.beta).lpNorm<Eigen::Infinity>() < 1e-6);
  CHECK((res.sigma - oracle.sigma).lpNorm<Eigen::Infinity>() < 1e-5);
}

TEST_CASE("starting values are per-response solutions with pinned diagonals") {
  const GaussianInstance inst = gaussian_instance(47, 70, 2, 3, {1.0, 1.0});
  const Eigen::VectorXd beta0 = initial_beta(inst.model, inst.data);

  // Identity links turn the reweighting pass into plain least squares, and
  // the block design splits it per response.
  const int p = 3;
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < inst.data.n(); ++i) {
    const auto x = inst.data.X[static_cast<std::size_t>(i)].row(0).head(p);
    gram.noalias() += x.transpose() * x;
  }
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < inst.data.n(); ++i) {
      const auto x = inst.data.X[static_cast<std::size_t>(i)].row(0).head(p);
      rhs.noalias() += x.transpose() * inst.data.y(i, j);
    }
    const Eigen::VectorXd ols = gram.ldlt().solve(rhs);
    CHECK((beta0.segment(j * p, p) - ols).lpNorm<Eigen::Infinity>() < 1e-10);
  }

  ConstraintSpec cspec;
  cspec.r = 3;
  cspec.fixed.push_back({0, 0, 0.5});
  cspec.eigen_floor = 1e-6;
  const Eigen::MatrixXd sigma0 = initial_sigma(cspec, FitControls{});
  CHECK(sigma0(0, 0) == 0.5);
  CHECK(sigma0(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(satisfies(sigma0, cspec, 1e-8));
}

TEST_CASE("control validation rejects out-of-range settings") {
  const FitControls good;
  CHECK_NOTHROW(validate_controls(good));

  auto reject = [&](auto&& tweak) {
    FitControls ctl;
    tweak(ctl);
    CHECK_THROWS_AS(validate_controls(ctl), SpecError);
  };
  reject([](FitControls& c) { c.gamma = 0.0; });
  reject([](FitControls& c) { c.gamma = 1.0; });
  reject([](FitControls& c) { c.ls_shrink = 1.0; });
  reject([](FitControls& c) { c.ls_grow = 1.0; });
  reject([](FitControls& c) { c.alpha_init = 0.0; });
  reject([](FitControls& c) { c.eps_beta = 0.0; });
  reject([](FitControls& c) { c.eps_sigma = -1.0; });
  reject([](FitControls& c) { c.inner_tol = 0.0; });
  reject([](FitControls& c) { c.max_outer = 0; });
  reject([](FitControls& c) { c.max_inner = 0; });
  reject([](FitControls& c) { c.max_prox = 0; });
  reject([](FitControls& c) { c.proj_maxiter = 0; });
  reject([](FitControls& c) { c.latent.kappa = 0.0; });
  reject([](FitControls& c) { c.latent.tau = -1e-3; });
  reject([](FitControls& c) { c.latent.grad_tol = 0.0; });
  reject([](FitControls& c) { c.latent.threads = 0; });
}

TEST_CASE("fit rejects unidentifiable or degenerate problems") {
  const SimDesign design = mixed_design(5, 40);
  const GeneratedData gen = gen_dataset(design);
  const ModelSpec model = design_model(design);
  const ConstraintSpec cspec = design_cspec(design, false);

  SUBCASE("Bernoulli variance left free") {
    ConstraintSpec loose;
    loose.r = 3;
    CHECK_THROWS_AS(fit(model, gen.data, loose), SpecError);
  }
  SUBCASE("constraint dimension mismatch") {
    ConstraintSpec wrong = cspec;
    wrong.r = 4;
    CHECK_THROWS_AS(fit(model, gen.data, wrong), SpecError);
  }
  SUBCASE("collinear stacked design") {
    const int n = 50;
    rng::Stream stream(3);
    Eigen::MatrixXd predictors(n, 2);
    Eigen::MatrixXd y(n, 1);
    ModelSpec gauss;
    gauss.families.push_back(Family::gaussian(1.0));
    for (int i = 0; i < n; ++i) {
      predictors(i, 0) = 1.0;
      predictors(i, 1) = 2.0;
      y(i, 0) = stream.normal(0.0, 1.0);
    }
    const Dataset flat = make_kronecker_dataset(y, predictors);
    ConstraintSpec one;
    one.r = 1;
    CHECK_THROWS_AS(fit(gauss, flat, one), SpecError);
  }
  SUBCASE("responses outside the family support") {
    Dataset bad = gen.data;
    bad.y(0, 2) = -1.0;  // Poisson coordinate
    CHECK_THROWS_AS(fit(model, bad, cspec), SpecError);
    bad = gen.data;
    bad.y(0, 1) = 0.5;  // Bernoulli coordinate
    CHECK_THROWS_AS(fit(model, bad, cspec), SpecError);
  }
  SUBCASE("non-finite design entries") {
    Dataset bad = gen.data;
    bad.X[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(fit(model, bad, cspec), SpecError);
  }
}
