#include "mixedreg/constraints.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "mixedreg/errors.hpp"

namespace mixedreg {

namespace {

std::pair<int, int> norm_idx(int j, int k) {
  return j <= k ? std::make_pair(j, k) : std::make_pair(k, j);
}

void check_index(int j, int k, int r, const char* what) {
  if (j < 0 || k < 0 || j >= r || k >= r) {
    throw SpecError(std::string(what) + " index (" + std::to_string(j + 1) +
                    "," + std::to_string(k + 1) + ") outside 1.." +
                    std::to_string(r));
  }
}

}  // namespace

std::vector<FixedEntry> ConstraintSpec::all_fixed() const {
  std::vector<FixedEntry> out;
  out.reserve(fixed.size() + zeros.size());
  for (const auto& f : fixed) {
    auto [j, k] = norm_idx(f.j, f.k);
    out.push_back({j, k, f.value});
  }
  for (const auto& z : zeros) {
    auto [j, k] = norm_idx(z.first, z.second);
    out.push_back({j, k, 0.0});
  }
  return out;
}

bool ConstraintSpec::has_fixed_diagonal(int j) const {
  for (const auto& f : all_fixed()) {
    if (f.j == j && f.k == j) return true;
  }
  return false;
}

void validate_constraints(const ConstraintSpec& spec) {
  if (spec.r <= 0) throw SpecError("constraint spec: r must be positive");
  if (!(spec.eigen_floor >= 0.0) || !std::isfinite(spec.eigen_floor)) {
    throw SpecError("constraint spec: eigen_floor must be finite and >= 0");
  }

  std::map<std::pair<int, int>, double> fixed_at;
  for (const auto& f : spec.all_fixed()) {
    check_index(f.j, f.k, spec.r, "fixed");
    if (!std::isfinite(f.value)) {
      throw SpecError("fixed value at (" + std::to_string(f.j + 1) + "," +
                      std::to_string(f.k + 1) + ") is not finite");
    }
    auto key = std::make_pair(f.j, f.k);
    auto it = fixed_at.find(key);
    if (it != fixed_at.end() && it->second != f.value) {
      throw SpecError("conflicting fixed values at (" + std::to_string(f.j + 1) +
                      "," + std::to_string(f.k + 1) + ")");
    }
    fixed_at[key] = f.value;
    if (f.j == f.k && f.value < spec.eigen_floor) {
      throw SpecError("fixed diagonal (" + std::to_string(f.j + 1) + "," +
                      std::to_string(f.j + 1) + ") below eigen_floor");
    }
  }

  std::set<std::pair<int, int>> tied;
  for (const auto& group : spec.ties) {
    if (group.size() < 2) {
      throw SpecError("tie group must contain at least two entries");
    }
    for (const auto& [j, k] : group) {
      check_index(j, k, spec.r, "tie");
      auto key = norm_idx(j, k);
      if (fixed_at.count(key)) {
        throw SpecError("entry (" + std::to_string(key.first + 1) + "," +
                        std::to_string(key.second + 1) +
                        ") is both fixed and tied");
      }
      if (!tied.insert(key).second) {
        throw SpecError("entry (" + std::to_string(key.first + 1) + "," +
                        std::to_string(key.second + 1) +
                        ") appears in more than one tie group");
      }
    }
  }
}

Eigen::MatrixXd project_eigenfloor(const Eigen::MatrixXd& S, double eigen_floor) {
  const double asym = (S - S.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12) {
    throw NumericError("projection input asymmetric by " + std::to_string(asym));
  }
  Eigen::MatrixXd sym = 0.5 * (S + S.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) {
    throw NumericError("eigendecomposition failed in projection");
  }
  Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(eigen_floor);
  return eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
}

Eigen::MatrixXd project_affine(Eigen::MatrixXd S, const ConstraintSpec& spec) {
  for (const auto& f : spec.all_fixed()) {
    S(f.j, f.k) = f.value;
    S(f.k, f.j) = f.value;
  }
  for (const auto& group : spec.ties) {
    double sum = 0.0;
    for (const auto& [j, k] : group) sum += S(j, k);
    const double mean = sum / static_cast<double>(group.size());
    for (const auto& [j, k] : group) {
      S(j, k) = mean;
      S(k, j) = mean;
    }
  }
  return S;
}

Eigen::MatrixXd project(const Eigen::MatrixXd& S, const ConstraintSpec& spec,
                        double tol, int maxiter, ProjectionInfo* info) {
  if (S.rows() != spec.r || S.cols() != spec.r) {
    throw SpecError("projection input has wrong dimension");
  }
  if (!S.allFinite()) throw NumericError("projection input not finite");

  const int r = spec.r;
  Eigen::MatrixXd x = 0.5 * (S + S.transpose());
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(r, r);
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(r, r);
  Eigen::MatrixXd mid(r, r), y(r, r), xnew(r, r), scaled(r, r);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(r);

  ProjectionInfo local;
  local.converged = false;
  int it = 0;
  for (; it < maxiter; ++it) {
    mid = x + p;
    // Resymmetrize: rounding in the correction updates drifts off the
    // symmetric subspace after many sweeps.
    for (int a = 0; a < r; ++a) {
      for (int b = a + 1; b < r; ++b) {
        const double v = 0.5 * (mid(a, b) + mid(b, a));
        mid(a, b) = v;
        mid(b, a) = v;
      }
    }
    eig.compute(mid);
    if (eig.info() != Eigen::Success) {
      throw NumericError("eigendecomposition failed in projection");
    }
    if (eig.eigenvalues().minCoeff() >= spec.eigen_floor) {
      y = mid;
      p.setZero();
    } else {
      scaled.noalias() = eig.eigenvectors() *
                         eig.eigenvalues().cwiseMax(spec.eigen_floor).asDiagonal();
      y.noalias() = scaled * eig.eigenvectors().transpose();
      p = mid - y;
    }
    const double gap_cone = (x - y).norm();
    xnew = project_affine(y + q, spec);
    const double gap_affine = (y - xnew).norm();
    q += y - xnew;
    // Change across both half-steps. The full iterates alone can repeat
    // exactly while the corrections still grow (a strongly indefinite input
    // projects to the same clamped matrix for many sweeps), so watching
    // only x_{t+1} - x_t stops too early at a feasible non-projection.
    local.last_change = std::max(gap_cone, gap_affine);
    x.swap(xnew);
    if (local.last_change < tol) {
      local.converged = true;
      ++it;
      break;
    }
  }
  local.iterations = it;
  eig.compute(x, Eigen::EigenvaluesOnly);
  local.min_eigenvalue =
      eig.info() == Eigen::Success ? eig.eigenvalues().minCoeff() : std::nan("");
  if (info) *info = local;
  return x;
}

bool satisfies(const Eigen::MatrixXd& S, const ConstraintSpec& spec, double tol) {
  if (S.rows() != spec.r || S.cols() != spec.r) return false;
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > tol) return false;
  for (const auto& f : spec.all_fixed()) {
    if (std::abs(S(f.j, f.k) - f.value) > tol) return false;
  }
  for (const auto& group : spec.ties) {
    for (std::size_t i = 1; i < group.size(); ++i) {
      if (std::abs(S(group[i].first, group[i].second) -
                   S(group[0].first, group[0].second)) > tol) {
        return false;
      }
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (S + S.transpose()));
  if (eig.info() != Eigen::Success) return false;
  return eig.eigenvalues().minCoeff() >= spec.eigen_floor - tol;
}

void check_feasible(const ConstraintSpec& spec) {
  validate_constraints(spec);
  Eigen::MatrixXd seed =
      std::max(spec.eigen_floor, 1.0) * Eigen::MatrixXd::Identity(spec.r, spec.r);
  ProjectionInfo info;
  Eigen::MatrixXd out = project(seed, spec, 1e-10, 10000, &info);
  if (!satisfies(out, spec, 1e-6)) {
    throw SpecError("constraint set appears infeasible: projection of a scaled "
                    "identity does not satisfy the constraints");
  }
}

}  // namespace mixedreg
