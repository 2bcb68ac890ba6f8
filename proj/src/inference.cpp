#include "mixedreg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <utility>

#include "mixedreg/errors.hpp"

namespace mixedreg {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Regularized lower incomplete gamma P(a,x) by power series; valid x < a+1.
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 1000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * 1e-16) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// Regularized upper incomplete gamma Q(a,x) by modified Lentz continued
// fraction; valid x >= a+1.
double gamma_q_cf(double a, double x) {
  constexpr double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
}

std::pair<int, int> norm_idx(int j, int k) {
  return j <= k ? std::make_pair(j, k) : std::make_pair(k, j);
}

std::map<std::pair<int, int>, double> fixed_map(const ConstraintSpec& cs) {
  std::map<std::pair<int, int>, double> out;
  for (const auto& f : cs.all_fixed()) out[{f.j, f.k}] = f.value;
  return out;
}

int tie_df(const ConstraintSpec& cs) {
  int t = 0;
  for (const auto& g : cs.ties) t += static_cast<int>(g.size()) - 1;
  return t;
}

}  // namespace

double chisq_sf(double x, int df) {
  if (df < 1) throw SpecError("degrees of freedom must be at least 1");
  if (std::isnan(x)) throw NumericError("chi-square argument is NaN");
  if (x <= 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  const double a = 0.5 * df;
  const double xx = 0.5 * x;
  if (xx < a + 1.0) return 1.0 - gamma_p_series(a, xx);
  return gamma_q_cf(a, xx);
}

double chisq_quantile(double level, int df) {
  if (!(level > 0.0 && level < 1.0)) {
    throw SpecError("quantile level must lie in (0,1)");
  }
  const double target = 1.0 - level;
  double hi = 1.0;
  while (chisq_sf(hi, df) > target) {
    hi *= 2.0;
    if (hi > 1e12) break;
  }
  double lo = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (chisq_sf(mid, df) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
    if (hi - lo < 1e-12 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

int hypothesis_df(const Hypothesis& hyp) {
  const auto nf = fixed_map(hyp.null_cspec);
  const auto af = fixed_map(hyp.alt_cspec);
  return static_cast<int>(nf.size()) - static_cast<int>(af.size()) +
         tie_df(hyp.null_cspec) - tie_df(hyp.alt_cspec) +
         static_cast<int>(hyp.beta_restrictions.size());
}

void validate_hypothesis(const Hypothesis& hyp) {
  validate_constraints(hyp.null_cspec);
  validate_constraints(hyp.alt_cspec);
  if (hyp.null_cspec.r != hyp.alt_cspec.r) {
    throw SpecError("hypothesis: constraint sets differ in dimension");
  }
  if (hyp.null_cspec.eigen_floor != hyp.alt_cspec.eigen_floor) {
    throw SpecError("hypothesis: eigenvalue floors must agree");
  }

  const auto nf = fixed_map(hyp.null_cspec);
  const auto af = fixed_map(hyp.alt_cspec);
  for (const auto& [key, value] : af) {
    auto it = nf.find(key);
    if (it == nf.end() || it->second != value) {
      throw SpecError("hypothesis not nested: alternative fixes (" +
                      std::to_string(key.first + 1) + "," +
                      std::to_string(key.second + 1) +
                      ") but the null does not");
    }
  }

  // Class id of each entry under the null: fixed entries and tie groups
  // force equality; everything else is free.
  std::map<std::pair<int, int>, int> null_class;
  int next_class = 0;
  for (const auto& g : hyp.null_cspec.ties) {
    const int id = next_class++;
    for (const auto& [j, k] : g) null_class[norm_idx(j, k)] = id;
  }
  for (const auto& g : hyp.alt_cspec.ties) {
    bool same_tie = true;
    int common = -2;
    bool same_fixed = true;
    double value = 0.0;
    bool first = true;
    for (const auto& [j, k] : g) {
      const auto key = norm_idx(j, k);
      auto tc = null_class.find(key);
      const int cls = tc == null_class.end() ? -1 : tc->second;
      auto fc = nf.find(key);
      if (first) {
        common = cls;
        if (fc != nf.end()) {
          value = fc->second;
        } else {
          same_fixed = false;
        }
        first = false;
      } else {
        if (cls == -1 || cls != common) same_tie = false;
        if (fc == nf.end() || (same_fixed && fc->second != value)) {
          same_fixed = false;
        }
      }
    }
    if (common == -1) same_tie = false;
    if (!same_tie && !same_fixed) {
      throw SpecError("hypothesis not nested: an alternative tie group is "
                      "not enforced by the null");
    }
  }

  // Boundary: a null-only zero diagonal pins an eigenvalue at 0, where the
  // chi-square calibration breaks down.
  for (const auto& [key, value] : nf) {
    if (key.first == key.second && value == 0.0 && !af.count(key)) {
      throw SpecError("hypothesis pins a diagonal to zero; boundary "
                      "hypotheses are not supported");
    }
  }

  std::set<int> seen;
  for (const auto& rst : hyp.beta_restrictions) {
    if (!seen.insert(rst.index).second) {
      throw SpecError("hypothesis restricts coefficient " +
                      std::to_string(rst.index + 1) + " twice");
    }
    if (!std::isfinite(rst.value)) {
      throw SpecError("coefficient restriction value is not finite");
    }
  }

  if (hypothesis_df(hyp) < 0) {
    throw SpecError("hypothesis not nested: negative degrees of freedom");
  }
}

TestResult lrt(const ModelSpec& model, const Dataset& data,
               const Hypothesis& hyp, const FitControls& ctl) {
  validate_hypothesis(hyp);
  validate_model(model);
  validate_data(model, data);
  validate_identifiability(model, hyp.alt_cspec);
  for (const auto& rst : hyp.beta_restrictions) {
    if (rst.index < 0 || rst.index >= data.q()) {
      throw SpecError("coefficient restriction index out of range");
    }
  }

  TestResult out;
  out.df = hypothesis_df(hyp);

  FitResult nf = fit(model, data, hyp.null_cspec, ctl, hyp.beta_restrictions);
  out.null_fit = {nf.beta, nf.sigma, nf.h_final, nf.converged, nf.outer_iters};
  for (const auto& wmsg : nf.warnings) {
    out.warnings.push_back("null fit: " + wmsg);
  }

  // Second stage reoptimizes under the alternative constraints with the
  // expansion points frozen at the null solution, started from the null
  // estimates; monotone descent from there keeps T nonnegative.
  WorkingModel wm(model, data);
  wm.refresh(nf.w);
  WorkingState state{nf.w, nf.beta, nf.sigma};
  BcdResult alt = bcd_beta_sigma(wm, state, hyp.alt_cspec, ctl);
  out.alt_fit = {alt.beta, alt.sigma, alt.h_final, alt.cycles < ctl.max_inner,
                 alt.cycles};
  if (alt.cycles >= ctl.max_inner) {
    out.warnings.push_back("alternative stage hit its cycle cap");
  }

  out.T = nf.h_final - alt.h_final;
  if (out.T < -1e-8) {
    throw NumericError("test statistic negative beyond roundoff: " +
                       std::to_string(out.T));
  }
  out.p_value = out.df == 0 ? 1.0 : chisq_sf(std::max(out.T, 0.0), out.df);
  return out;
}

ProfileCi profile_ci(const ModelSpec& model, const Dataset& data,
                     const ConstraintSpec& cspec, int j, int k, double level,
                     const FitControls& ctl) {
  if (!(level > 0.0 && level < 1.0)) {
    throw SpecError("confidence level must lie in (0,1)");
  }
  validate_constraints(cspec);
  if (j < 0 || k < 0 || j >= cspec.r || k >= cspec.r) {
    throw SpecError("covariance element out of range");
  }
  const auto key = norm_idx(j, k);
  for (const auto& f : cspec.all_fixed()) {
    if (std::make_pair(f.j, f.k) == key) {
      throw SpecError("covariance element is already fixed");
    }
  }
  for (const auto& g : cspec.ties) {
    for (const auto& [a, b] : g) {
      if (norm_idx(a, b) == key) {
        throw SpecError("covariance element is already tied");
      }
    }
  }

  FitResult base = fit(model, data, cspec, ctl);
  const double est = base.sigma(key.first, key.second);
  const double quant = chisq_quantile(level, 1);
  const double step = 0.1 * (1.0 + std::abs(est));

  auto tstat = [&](double v) -> double {
    if (key.first == key.second && v == 0.0) return kInf;
    Hypothesis hyp;
    hyp.null_cspec = cspec;
    hyp.null_cspec.fixed.push_back({key.first, key.second, v});
    hyp.alt_cspec = cspec;
    try {
      TestResult t = lrt(model, data, hyp, ctl);
      return std::max(t.T, 0.0);
    } catch (const SpecError&) {
      return kInf;  // v makes the constraint set infeasible
    } catch (const NumericError&) {
      return kInf;
    }
  };

  auto scan = [&](int dir, bool& unbounded) -> double {
    double inside = est;
    for (int m = 1; m <= 50; ++m) {
      const double v = est + dir * m * step;
      if (tstat(v) > quant) {
        double outside = v;
        while (std::abs(outside - inside) > 1e-4) {
          const double mid = 0.5 * (inside + outside);
          if (tstat(mid) > quant) {
            outside = mid;
          } else {
            inside = mid;
          }
        }
        return inside;
      }
      inside = v;
    }
    unbounded = true;
    return dir > 0 ? kInf : -kInf;
  };

  ProfileCi out;
  out.estimate = est;
  out.level = level;
  out.hi = scan(+1, out.hi_unbounded);
  out.lo = scan(-1, out.lo_unbounded);
  return out;
}

}  // namespace mixedreg
