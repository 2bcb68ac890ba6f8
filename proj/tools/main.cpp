// Command-line front end: fit, test, ci, predict, simulate.
// Exit codes: 0 success, 2 solver did not converge (output still written),
// 1 anything else (bad flags, malformed input, numeric failure).

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mixedreg/errors.hpp"
#include "mixedreg/fit.hpp"
#include "mixedreg/inference.hpp"
#include "mixedreg/io.hpp"
#include "mixedreg/moments.hpp"
#include "mixedreg/simulate.hpp"

namespace {

using namespace mixedreg;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void add_control_flags(CLI::App* cmd, FitControls& ctl) {
  cmd->add_option("--eps-beta", ctl.eps_beta,
                  "squared-norm tolerance on coefficient steps");
  cmd->add_option("--eps-sigma", ctl.eps_sigma,
                  "squared Frobenius tolerance on covariance steps");
  cmd->add_option("--max-outer", ctl.max_outer, "outer iteration cap");
  cmd->add_option("--inner-tol", ctl.inner_tol,
                  "relative objective tolerance of the inner loops");
  cmd->add_option("--max-inner", ctl.max_inner,
                  "coordinate-descent cycle cap per outer iteration");
  cmd->add_option("--inertia", ctl.gamma,
                  "momentum weight of the covariance update, in (0,1)");
  cmd->add_option("--alpha-init", ctl.alpha_init,
                  "initial covariance step size");
  cmd->add_option("--ls-shrink", ctl.ls_shrink, "line-search shrink factor");
  cmd->add_option("--ls-grow", ctl.ls_grow,
                  "step-size growth between covariance updates");
  cmd->add_option("--max-prox", ctl.max_prox,
                  "projected-gradient iteration cap per covariance update");
  cmd->add_option("--proj-tol", ctl.proj_tol,
                  "alternating-projection stopping tolerance");
  cmd->add_option("--proj-maxiter", ctl.proj_maxiter,
                  "alternating-projection sweep cap");
  cmd->add_option("--kappa", ctl.latent.kappa,
                  "ridge added to the covariance in the latent update");
  cmd->add_option("--tau", ctl.latent.tau,
                  "pull of the latent vectors toward the linear predictor");
  cmd->add_option("--grad-tol", ctl.latent.grad_tol,
                  "gradient norm target of the latent update");
  cmd->add_option("--max-newton", ctl.latent.max_newton,
                  "trust-region iteration cap per observation");
  cmd->add_option("--trust-init", ctl.latent.trust_init,
                  "initial trust-region radius");
  cmd->add_option("--trust-max", ctl.latent.trust_max,
                  "trust-region radius cap");
  cmd->add_option("--threads", ctl.latent.threads,
                  "worker cap for the per-observation latent updates")
      ->envname("MIXEDREG_THREADS");
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::fputs(text.c_str(), stdout);
  } else {
    write_file(out_path, text);
  }
}

ConstraintSpec load_constraints(const std::string& path, int r) {
  if (path.empty()) {
    ConstraintSpec cs;
    cs.r = r;
    return cs;
  }
  return parse_constraints_json(read_file(path), r);
}

std::string prediction_table(const PredictionExperimentResult& res) {
  std::string out =
      "rep,method,ratio,ratio_gaussian,ratio_poisson,ratio_bernoulli\n";
  for (int i = 0; i < res.reps_done; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    for (int m = 0; m < 2; ++m) {
      const bool full = m == 0;
      out += std::to_string(i + 1);
      out += full ? ",full," : ",diagonal,";
      out += format_double(full ? res.full_ratio[idx] : res.diag_ratio[idx]);
      const auto& by_kind =
          full ? res.full_kind_ratio[idx] : res.diag_kind_ratio[idx];
      for (double v : by_kind) {
        out += ',';
        out += format_double(v);
      }
      out += '\n';
    }
  }
  return out;
}

std::string lrt_table(const LrtExperimentResult& res) {
  std::string out = "rep,T,p_value,reject\n";
  for (int i = 0; i < res.reps_done; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    out += std::to_string(i + 1);
    out += ',';
    out += format_double(res.tstats[idx]);
    out += ',';
    out += format_double(res.pvalues[idx]);
    out += res.pvalues[idx] < 0.05 ? ",1\n" : ",0\n";
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Regression for mixed continuous, count and binary responses tied "
      "together by a latent Gaussian vector"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "mixedreg 0.1.0");

  int exit_code = 0;

  std::string data_path, model_path, cons_path, hyp_path, out_path;
  std::string fit_path, newdata_path;
  FitControls ctl;

  auto* cmd_fit = app.add_subcommand(
      "fit", "Estimate coefficients and the latent covariance");
  cmd_fit->add_option("--data", data_path, "observations, wide CSV")
      ->required();
  cmd_fit->add_option("--model", model_path, "model JSON")->required();
  cmd_fit->add_option("--constraints", cons_path, "constraint JSON");
  cmd_fit->add_option("--out", out_path, "output path (default stdout)");
  add_control_flags(cmd_fit, ctl);
  cmd_fit->callback([&]() {
    const ModelConfig cfg = parse_model_json(read_file(model_path));
    const Dataset data = parse_data_csv(read_file(data_path), cfg);
    const ConstraintSpec cspec = load_constraints(cons_path, cfg.model.r());
    const FitResult res = fit(cfg.model, data, cspec, ctl);
    emit(out_path, fit_result_json(res));
    for (const auto& warning : res.warnings) {
      std::fprintf(stderr, "warning: %s\n", warning.c_str());
    }
    exit_code = res.converged ? 0 : 2;
  });

  auto* cmd_test = app.add_subcommand(
      "test", "Likelihood-ratio test of nested covariance hypotheses");
  cmd_test->add_option("--data", data_path, "observations, wide CSV")
      ->required();
  cmd_test->add_option("--model", model_path, "model JSON")->required();
  cmd_test->add_option("--hypothesis", hyp_path, "hypothesis JSON")
      ->required();
  cmd_test->add_option("--out", out_path, "output path (default stdout)");
  add_control_flags(cmd_test, ctl);
  cmd_test->callback([&]() {
    const ModelConfig cfg = parse_model_json(read_file(model_path));
    const Dataset data = parse_data_csv(read_file(data_path), cfg);
    const Hypothesis hyp =
        parse_hypothesis_json(read_file(hyp_path), cfg.model.r());
    const TestResult res = lrt(cfg.model, data, hyp, ctl);
    emit(out_path, test_result_json(res));
    for (const auto& warning : res.warnings) {
      std::fprintf(stderr, "warning: %s\n", warning.c_str());
    }
    exit_code = res.null_fit.converged && res.alt_fit.converged ? 0 : 2;
  });

  std::vector<int> element;
  double level = 0.95;
  auto* cmd_ci = app.add_subcommand(
      "ci", "Profile confidence interval for one covariance element");
  cmd_ci->add_option("--data", data_path, "observations, wide CSV")
      ->required();
  cmd_ci->add_option("--model", model_path, "model JSON")->required();
  cmd_ci->add_option("--constraints", cons_path, "constraint JSON");
  cmd_ci->add_option("--element", element, "row,column (1-based)")
      ->required()
      ->delimiter(',')
      ->expected(2);
  cmd_ci->add_option("--level", level, "coverage level, default 0.95");
  cmd_ci->add_option("--out", out_path, "output path (default stdout)");
  add_control_flags(cmd_ci, ctl);
  cmd_ci->callback([&]() {
    const ModelConfig cfg = parse_model_json(read_file(model_path));
    const Dataset data = parse_data_csv(read_file(data_path), cfg);
    const ConstraintSpec cspec = load_constraints(cons_path, cfg.model.r());
    const int r = cfg.model.r();
    if (element[0] < 1 || element[0] > r || element[1] < 1 || element[1] > r) {
      throw SpecError("--element indices must lie in 1.." + std::to_string(r));
    }
    const int j = element[0] - 1;
    const int k = element[1] - 1;
    const FitResult base = fit(cfg.model, data, cspec, ctl);
    const ProfileCi ci =
        profile_ci(cfg.model, data, cspec, j, k, level, ctl);
    emit(out_path, ci_json(ci, j, k));
    exit_code = base.converged ? 0 : 2;
  });

  auto* cmd_predict = app.add_subcommand(
      "predict", "Marginal mean responses for new design rows");
  cmd_predict->add_option("--fit", fit_path, "fit result JSON")->required();
  cmd_predict->add_option("--model", model_path, "model JSON")->required();
  cmd_predict->add_option("--newdata", newdata_path, "predictor CSV")
      ->required();
  cmd_predict->add_option("--out", out_path, "output path (default stdout)");
  cmd_predict->callback([&]() {
    const ModelConfig cfg = parse_model_json(read_file(model_path));
    const FittedParams params = parse_fit_result_json(read_file(fit_path));
    const auto X = parse_newdata_csv(read_file(newdata_path), cfg);
    if (params.sigma.rows() != cfg.model.r()) {
      throw SpecError("fit result covariance size does not match the model");
    }
    if (!X.empty() && params.beta.size() != X.front().cols()) {
      throw SpecError("fit result coefficient length does not match the data");
    }
    emit(out_path, predictions_csv(
                       predict(cfg.model, params.beta, params.sigma, X)));
  });

  std::string experiment, structure = "ar";
  SimDesign design;
  int reps = 100;
  int n_test = 2000;
  double gamma_effect = 0.0;
  std::uint64_t seed = 0;
  auto* cmd_sim = app.add_subcommand(
      "simulate", "Replicated synthetic-data experiments");
  cmd_sim
      ->add_option("--experiment", experiment,
                   "one of: predict, lrt-sigma, lrt-beta")
      ->required()
      ->check(CLI::IsMember({"predict", "lrt-sigma", "lrt-beta"}));
  cmd_sim
      ->add_option("--structure", structure,
                   "latent covariance pattern: ar, cs or block")
      ->check(CLI::IsMember({"ar", "cs", "block"}));
  cmd_sim->add_option("--rho", design.rho, "correlation parameter");
  cmd_sim->add_option("--n", design.n, "training observations");
  cmd_sim->add_option("--r", design.r, "responses (multiple of 3)");
  cmd_sim->add_option("--p", design.p,
                      "coefficients per response, intercept included");
  cmd_sim->add_option("--reps", reps, "replications");
  cmd_sim->add_option("--seed", seed, "master seed");
  cmd_sim->add_option("--ntest", n_test,
                      "test observations (predict experiment)");
  cmd_sim->add_option("--gamma", gamma_effect,
                      "effect scale of the tested coefficients (lrt-beta)");
  cmd_sim->add_option("--out", out_path, "table path (default stdout)");
  add_control_flags(cmd_sim, ctl);
  cmd_sim->callback([&]() {
    design.seed = seed;
    if (structure == "ar") {
      design.structure = SigmaStructure::AR;
    } else if (structure == "cs") {
      design.structure = SigmaStructure::CS;
    } else {
      design.structure = SigmaStructure::BLOCK;
    }
    if (reps < 1) throw SpecError("--reps must be at least 1");
    std::string table;
    std::string summary;
    if (experiment == "predict") {
      const auto res = run_prediction_experiment(design, reps, n_test, ctl);
      table = prediction_table(res);
      summary = "predict: " + std::to_string(res.reps_done) + "/" +
                std::to_string(res.reps_requested) +
                " replications, mean ratio full " +
                format_double(res.full_mean) + ", diagonal " +
                format_double(res.diag_mean) + ", fit failures " +
                std::to_string(res.fit_failures) + "\n";
    } else {
      LrtKind kind = LrtKind::SigmaDiag;
      if (experiment == "lrt-beta") {
        kind = LrtKind::BetaRow;
        design.shared_predictors = true;
        design.second_coef_effect = true;
        design.gamma_effect = gamma_effect;
      }
      const auto res = run_lrt_experiment(design, reps, kind, ctl);
      table = lrt_table(res);
      summary = experiment + ": " + std::to_string(res.reps_done) + "/" +
                std::to_string(res.reps_requested) +
                " replications, rejection rate " +
                format_double(res.rejection_rate) + " (mc se " +
                format_double(res.mc_se) + "), fit failures " +
                std::to_string(res.fit_failures) + "\n";
    }
    emit(out_path, table);
    std::fputs(summary.c_str(), out_path.empty() ? stderr : stdout);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const SpecError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return exit_code;
}
