#pragma once

#include <string>

#include "mixedreg/rng.hpp"

namespace mixedreg {

enum class FamilyKind { Gaussian, Poisson, Bernoulli };

/// Conditional response family: canonical link, known dispersion psi.
/// Poisson with psi != 1 is the quasi-Poisson moment specification.
struct Family {
  FamilyKind kind = FamilyKind::Gaussian;
  double psi = 1.0;

  static Family gaussian(double psi) { return {FamilyKind::Gaussian, psi}; }
  static Family poisson(double psi = 1.0) { return {FamilyKind::Poisson, psi}; }
  static Family bernoulli() { return {FamilyKind::Bernoulli, 1.0}; }
};

// Cumulant function c(w): w^2/2, exp(w), or softplus(w). Overflow-safe for
// the Bernoulli branch at any double w.
double cumulant(const Family& family, double w);

// c'(w): the conditional mean of Y given W = w (inverse link).
double mean(const Family& family, double w);

// c''(w): conditional variance of Y given W = w is psi * varweight(w).
double varweight(const Family& family, double w);

// The w-dependent part of the conditional log-density, (y*w - c(w))/psi.
// Terms constant in w are dropped, so values are comparable only at fixed y.
double logdensity_kernel(const Family& family, double y, double w);

// Draws Y | W = w. Quasi-Poisson (psi != 1) samples a plain Poisson.
double sample(const Family& family, double w, rng::Stream& stream);

// Numerically stable logistic function.
double logistic(double w);

const char* family_name(FamilyKind kind);
FamilyKind family_from_name(const std::string& name);

}  // namespace mixedreg
