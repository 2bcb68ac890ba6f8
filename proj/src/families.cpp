#include "mixedreg/families.hpp"

#include <cmath>
#include <limits>

#include "mixedreg/errors.hpp"

namespace mixedreg {

namespace {

void require_finite(double w) {
  if (!std::isfinite(w)) throw NumericError("families: non-finite latent value");
}

// log(1 + exp(w)) without overflow; exact to double precision for |w| > 30.
double softplus(double w) {
  if (w > 30.0) return w + std::log1p(std::exp(-w));
  if (w < -30.0) return std::exp(w);
  return std::log1p(std::exp(w));
}

}  // namespace

double logistic(double w) {
  if (w >= 0.0) return 1.0 / (1.0 + std::exp(-w));
  const double e = std::exp(w);
  return e / (1.0 + e);
}

double cumulant(const Family& family, double w) {
  require_finite(w);
  switch (family.kind) {
    case FamilyKind::Gaussian: return 0.5 * w * w;
    case FamilyKind::Poisson: return std::exp(w);
    case FamilyKind::Bernoulli: return softplus(w);
  }
  throw SpecError("families: unknown family kind");
}

double mean(const Family& family, double w) {
  require_finite(w);
  switch (family.kind) {
    case FamilyKind::Gaussian: return w;
    case FamilyKind::Poisson: return std::exp(w);
    case FamilyKind::Bernoulli: return logistic(w);
  }
  throw SpecError("families: unknown family kind");
}

double varweight(const Family& family, double w) {
  require_finite(w);
  switch (family.kind) {
    case FamilyKind::Gaussian: return 1.0;
    case FamilyKind::Poisson: return std::exp(w);
    case FamilyKind::Bernoulli: {
      const double p = logistic(w);
      return p * (1.0 - p);
    }
  }
  throw SpecError("families: unknown family kind");
}

double logdensity_kernel(const Family& family, double y, double w) {
  return (y * w - cumulant(family, w)) / family.psi;
}

double sample(const Family& family, double w, rng::Stream& stream) {
  require_finite(w);
  switch (family.kind) {
    case FamilyKind::Gaussian:
      return stream.normal(w, std::sqrt(family.psi));
    case FamilyKind::Poisson: {
      if (w > 700.0) throw NumericError("families: Poisson rate exp(w) overflows");
      return static_cast<double>(stream.poisson(std::exp(w)));
    }
    case FamilyKind::Bernoulli:
      return static_cast<double>(stream.bernoulli(logistic(w)));
  }
  throw SpecError("families: unknown family kind");
}

const char* family_name(FamilyKind kind) {
  switch (kind) {
    case FamilyKind::Gaussian: return "gaussian";
    case FamilyKind::Poisson: return "poisson";
    case FamilyKind::Bernoulli: return "bernoulli";
  }
  return "unknown";
}

FamilyKind family_from_name(const std::string& name) {
  if (name == "gaussian") return FamilyKind::Gaussian;
  if (name == "poisson") return FamilyKind::Poisson;
  if (name == "bernoulli") return FamilyKind::Bernoulli;
  throw SpecError("families: unknown family name '" + name + "'");
}

}  // namespace mixedreg
