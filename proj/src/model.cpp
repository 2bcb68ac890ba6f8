#include "mixedreg/model.hpp"

#include <cmath>
#include <string>
#include <utility>

#include "mixedreg/errors.hpp"

namespace mixedreg {

Dataset make_kronecker_dataset(const Eigen::MatrixXd& y,
                               const Eigen::MatrixXd& predictors) {
  if (y.rows() != predictors.rows()) {
    throw SpecError("responses and predictors disagree on sample size");
  }
  const int n = static_cast<int>(y.rows());
  const int r = static_cast<int>(y.cols());
  const int p = static_cast<int>(predictors.cols());
  Dataset data;
  data.y = y;
  data.X.reserve(n);
  for (int i = 0; i < n; ++i) {
    Eigen::MatrixXd Xi = Eigen::MatrixXd::Zero(r, r * p);
    for (int j = 0; j < r; ++j) {
      Xi.block(j, j * p, 1, p) = predictors.row(i);
    }
    data.X.push_back(std::move(Xi));
  }
  return data;
}

Dataset make_block_dataset(const Eigen::MatrixXd& y,
                           std::vector<Eigen::MatrixXd> X) {
  Dataset data;
  data.y = y;
  data.X = std::move(X);
  return data;
}

void validate_model(const ModelSpec& model) {
  if (model.families.empty()) {
    throw SpecError("model must have at least one response");
  }
  for (int j = 0; j < model.r(); ++j) {
    const Family& f = model.families[j];
    if (!(f.psi > 0.0) || !std::isfinite(f.psi)) {
      throw SpecError("dispersion of response " + std::to_string(j + 1) +
                      " must be finite and positive");
    }
    if (f.kind == FamilyKind::Bernoulli && f.psi != 1.0) {
      throw SpecError("bernoulli response " + std::to_string(j + 1) +
                      " must have dispersion 1");
    }
  }
}

void validate_data(const ModelSpec& model, const Dataset& data) {
  const int n = data.n();
  const int r = model.r();
  if (n == 0) throw SpecError("dataset is empty");
  if (data.r() != r) {
    throw SpecError("response matrix has " + std::to_string(data.r()) +
                    " columns, model expects " + std::to_string(r));
  }
  if (static_cast<int>(data.X.size()) != n) {
    throw SpecError("need one design matrix per observation");
  }
  const int q = data.q();
  if (q <= 0) throw SpecError("design matrices must have at least one column");
  for (int i = 0; i < n; ++i) {
    if (data.X[i].rows() != r || data.X[i].cols() != q) {
      throw SpecError("design matrix " + std::to_string(i + 1) +
                      " has wrong shape");
    }
    if (!data.X[i].allFinite()) {
      throw SpecError("design matrix " + std::to_string(i + 1) +
                      " contains non-finite values");
    }
  }
  if (!data.y.allFinite()) {
    throw SpecError("response matrix contains non-finite values");
  }
  for (int j = 0; j < r; ++j) {
    switch (model.families[j].kind) {
      case FamilyKind::Gaussian:
        break;
      case FamilyKind::Poisson:
        for (int i = 0; i < n; ++i) {
          const double v = data.y(i, j);
          if (v < 0.0 || std::abs(v - std::round(v)) > 1e-9) {
            throw SpecError("response " + std::to_string(j + 1) +
                            " must be a nonnegative integer (row " +
                            std::to_string(i + 1) + ")");
          }
        }
        break;
      case FamilyKind::Bernoulli:
        for (int i = 0; i < n; ++i) {
          const double v = data.y(i, j);
          if (v != 0.0 && v != 1.0) {
            throw SpecError("response " + std::to_string(j + 1) +
                            " must be 0 or 1 (row " + std::to_string(i + 1) +
                            ")");
          }
        }
        break;
    }
  }
}

void validate_identifiability(const ModelSpec& model,
                              const ConstraintSpec& cspec) {
  if (cspec.r != model.r()) {
    throw SpecError("constraint spec dimension differs from model dimension");
  }
  for (int j = 0; j < model.r(); ++j) {
    if (model.families[j].kind == FamilyKind::Bernoulli &&
        !cspec.has_fixed_diagonal(j)) {
      throw SpecError("latent variance of bernoulli response " +
                      std::to_string(j + 1) +
                      " must be fixed by a diagonal constraint");
    }
  }
}

}  // namespace mixedreg
