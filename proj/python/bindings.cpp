#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mixedreg/constraints.hpp"
#include "mixedreg/errors.hpp"
#include "mixedreg/fit.hpp"
#include "mixedreg/inference.hpp"
#include "mixedreg/model.hpp"
#include "mixedreg/moments.hpp"
#include "mixedreg/simulate.hpp"

namespace py = pybind11;
using namespace mixedreg;

PYBIND11_MODULE(_core, m) {
  m.doc() =
      "Regression for mixed continuous, count and binary responses tied "
      "together by a latent Gaussian vector";

  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_RuntimeError);

  py::enum_<FamilyKind>(m, "FamilyKind")
      .value("gaussian", FamilyKind::Gaussian)
      .value("poisson", FamilyKind::Poisson)
      .value("bernoulli", FamilyKind::Bernoulli);

  py::class_<Family>(m, "Family")
      .def_readwrite("kind", &Family::kind)
      .def_readwrite("psi", &Family::psi)
      .def_static("gaussian", &Family::gaussian, py::arg("psi"))
      .def_static("poisson", &Family::poisson, py::arg("psi") = 1.0)
      .def_static("bernoulli", &Family::bernoulli);

  py::class_<ModelSpec>(m, "ModelSpec")
      .def(py::init<>())
      .def_readwrite("families", &ModelSpec::families)
      .def_property_readonly("r", &ModelSpec::r);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("y", &Dataset::y)
      .def_readwrite("X", &Dataset::X)
      .def_property_readonly("n", &Dataset::n);

  m.def("make_kronecker_dataset", &make_kronecker_dataset, py::arg("y"),
        py::arg("predictors"),
        "Dataset whose design rows share one predictor vector per "
        "observation");
  m.def("make_block_dataset", &make_block_dataset, py::arg("y"),
        py::arg("predictors"),
        "Dataset with a separate predictor vector per response");

  py::class_<FixedEntry>(m, "FixedEntry")
      .def(py::init<>())
      .def(py::init([](int j, int k, double value) {
             return FixedEntry{j, k, value};
           }),
           py::arg("j"), py::arg("k"), py::arg("value"))
      .def_readwrite("j", &FixedEntry::j)
      .def_readwrite("k", &FixedEntry::k)
      .def_readwrite("value", &FixedEntry::value);

  py::class_<ConstraintSpec>(m, "ConstraintSpec")
      .def(py::init<>())
      .def_readwrite("r", &ConstraintSpec::r)
      .def_readwrite("fixed", &ConstraintSpec::fixed)
      .def_readwrite("zeros", &ConstraintSpec::zeros)
      .def_readwrite("ties", &ConstraintSpec::ties)
      .def_readwrite("eigen_floor", &ConstraintSpec::eigen_floor);

  m.def("validate_constraints", &validate_constraints, py::arg("spec"));
  m.def(
      "project",
      [](const Eigen::MatrixXd& S, const ConstraintSpec& spec, double tol,
         int maxiter) { return project(S, spec, tol, maxiter); },
      py::arg("S"), py::arg("spec"), py::arg("tol") = 1e-10,
      py::arg("maxiter") = 10000,
      "Nearest constraint-satisfying matrix by alternating projections");

  py::class_<BetaRestriction>(m, "BetaRestriction")
      .def(py::init<>())
      .def(py::init([](int index, double value) {
             return BetaRestriction{index, value};
           }),
           py::arg("index"), py::arg("value"))
      .def_readwrite("index", &BetaRestriction::index)
      .def_readwrite("value", &BetaRestriction::value);

  py::class_<LatentControls>(m, "LatentControls")
      .def(py::init<>())
      .def_readwrite("kappa", &LatentControls::kappa)
      .def_readwrite("tau", &LatentControls::tau)
      .def_readwrite("grad_tol", &LatentControls::grad_tol)
      .def_readwrite("max_newton", &LatentControls::max_newton)
      .def_readwrite("trust_init", &LatentControls::trust_init)
      .def_readwrite("trust_max", &LatentControls::trust_max)
      .def_readwrite("threads", &LatentControls::threads);

  py::class_<FitControls>(m, "FitControls")
      .def(py::init<>())
      .def_readwrite("eps_beta", &FitControls::eps_beta)
      .def_readwrite("eps_sigma", &FitControls::eps_sigma)
      .def_readwrite("max_outer", &FitControls::max_outer)
      .def_readwrite("inner_tol", &FitControls::inner_tol)
      .def_readwrite("max_inner", &FitControls::max_inner)
      .def_readwrite("gamma", &FitControls::gamma)
      .def_readwrite("alpha_init", &FitControls::alpha_init)
      .def_readwrite("ls_shrink", &FitControls::ls_shrink)
      .def_readwrite("ls_grow", &FitControls::ls_grow)
      .def_readwrite("max_prox", &FitControls::max_prox)
      .def_readwrite("proj_tol", &FitControls::proj_tol)
      .def_readwrite("proj_maxiter", &FitControls::proj_maxiter)
      .def_readwrite("latent", &FitControls::latent);

  py::class_<FitResult>(m, "FitResult")
      .def_readonly("beta", &FitResult::beta)
      .def_readonly("sigma", &FitResult::sigma)
      .def_readonly("w", &FitResult::w)
      .def_readonly("h_final", &FitResult::h_final)
      .def_readonly("outer_iters", &FitResult::outer_iters)
      .def_readonly("converged", &FitResult::converged)
      .def_readonly("trace", &FitResult::trace)
      .def_readonly("warnings", &FitResult::warnings);

  m.def(
      "fit",
      [](const ModelSpec& model, const Dataset& data,
         const ConstraintSpec& cspec, const FitControls& ctl,
         const std::vector<BetaRestriction>& restrictions) {
        return fit(model, data, cspec, ctl, restrictions);
      },
      py::arg("model"), py::arg("data"), py::arg("constraints"),
      py::arg("controls") = FitControls{},
      py::arg("restrictions") = std::vector<BetaRestriction>{},
      "Approximate maximum likelihood estimate of the coefficients and "
      "the latent covariance");

  py::class_<Hypothesis>(m, "Hypothesis")
      .def(py::init<>())
      .def_readwrite("null_cspec", &Hypothesis::null_cspec)
      .def_readwrite("alt_cspec", &Hypothesis::alt_cspec)
      .def_readwrite("beta_restrictions", &Hypothesis::beta_restrictions);

  m.def("hypothesis_df", &hypothesis_df, py::arg("hypothesis"));

  py::class_<FitSummary>(m, "FitSummary")
      .def_readonly("beta", &FitSummary::beta)
      .def_readonly("sigma", &FitSummary::sigma)
      .def_readonly("h", &FitSummary::h)
      .def_readonly("converged", &FitSummary::converged)
      .def_readonly("iterations", &FitSummary::iterations);

  py::class_<TestResult>(m, "TestResult")
      .def_readonly("T", &TestResult::T)
      .def_readonly("df", &TestResult::df)
      .def_readonly("p_value", &TestResult::p_value)
      .def_readonly("null_fit", &TestResult::null_fit)
      .def_readonly("alt_fit", &TestResult::alt_fit)
      .def_readonly("warnings", &TestResult::warnings);

  m.def("lrt", &lrt, py::arg("model"), py::arg("data"), py::arg("hypothesis"),
        py::arg("controls") = FitControls{},
        "Likelihood-ratio test of nested covariance hypotheses");

  py::class_<ProfileCi>(m, "ProfileCi")
      .def_readonly("lo", &ProfileCi::lo)
      .def_readonly("hi", &ProfileCi::hi)
      .def_readonly("lo_unbounded", &ProfileCi::lo_unbounded)
      .def_readonly("hi_unbounded", &ProfileCi::hi_unbounded)
      .def_readonly("estimate", &ProfileCi::estimate)
      .def_readonly("level", &ProfileCi::level);

  m.def("profile_ci", &profile_ci, py::arg("model"), py::arg("data"),
        py::arg("constraints"), py::arg("j"), py::arg("k"),
        py::arg("level") = 0.95, py::arg("controls") = FitControls{},
        "Test-inversion confidence interval for one covariance element");

  m.def("chisq_sf", &chisq_sf, py::arg("x"), py::arg("df"),
        "Upper tail probability of the chi-square distribution");
  m.def("chisq_quantile", &chisq_quantile, py::arg("level"), py::arg("df"));

  py::class_<MarginalMoments>(m, "MarginalMoments")
      .def_readonly("mean", &MarginalMoments::mean)
      .def_readonly("cov", &MarginalMoments::cov)
      .def_readonly("cor", &MarginalMoments::cor);

  m.def("marginal_mean", &marginal_mean, py::arg("model"), py::arg("beta"),
        py::arg("sigma"), py::arg("X"));
  m.def("marginal_cov", &marginal_cov, py::arg("model"), py::arg("beta"),
        py::arg("sigma"), py::arg("X"));
  m.def("marginal_moments", &marginal_moments, py::arg("model"),
        py::arg("beta"), py::arg("sigma"), py::arg("X"),
        "Mean, covariance and correlation of the response vector");
  m.def("predict", &predict, py::arg("model"), py::arg("beta"),
        py::arg("sigma"), py::arg("X_new"),
        "Marginal mean responses, one row per new design matrix");

  py::enum_<SigmaStructure>(m, "SigmaStructure")
      .value("AR", SigmaStructure::AR)
      .value("CS", SigmaStructure::CS)
      .value("BLOCK", SigmaStructure::BLOCK);

  py::class_<SimDesign>(m, "SimDesign")
      .def(py::init<>())
      .def_readwrite("n", &SimDesign::n)
      .def_readwrite("r", &SimDesign::r)
      .def_readwrite("p", &SimDesign::p)
      .def_readwrite("structure", &SimDesign::structure)
      .def_readwrite("rho", &SimDesign::rho)
      .def_readwrite("seed", &SimDesign::seed)
      .def_readwrite("layout", &SimDesign::layout)
      .def_readwrite("psi_gaussian", &SimDesign::psi_gaussian)
      .def_readwrite("shared_predictors", &SimDesign::shared_predictors)
      .def_readwrite("second_coef_effect", &SimDesign::second_coef_effect)
      .def_readwrite("gamma_effect", &SimDesign::gamma_effect);

  py::class_<GeneratedData>(m, "GeneratedData")
      .def_readonly("data", &GeneratedData::data)
      .def_readonly("beta", &GeneratedData::beta)
      .def_readonly("sigma", &GeneratedData::sigma);

  m.def("gen_sigma", &gen_sigma, py::arg("structure"), py::arg("rho"),
        py::arg("r"), "Halved structured covariance used by the simulations");
  m.def("design_model", &design_model, py::arg("design"));
  m.def("design_cspec", &design_cspec, py::arg("design"), py::arg("diagonal"),
        "Constraints used when fitting simulated data");
  m.def("gen_dataset", &gen_dataset, py::arg("design"),
        "Deterministic synthetic dataset for a design seed");
}
