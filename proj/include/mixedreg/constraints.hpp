#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace mixedreg {

/// Feasible covariance set: affine element constraints (fixed entries, zero
/// entries, equality ties) intersected with the cone of symmetric matrices
/// whose eigenvalues are bounded below by eigen_floor.
///
/// Indices are 0-based here; the JSON schema uses 1-based indices.
struct FixedEntry {
  int j = 0;
  int k = 0;  // j <= k; applies symmetrically to (j,k) and (k,j)
  double value = 0.0;
};

struct ConstraintSpec {
  int r = 0;
  std::vector<FixedEntry> fixed;
  std::vector<std::pair<int, int>> zeros;                // sugar for fixed 0
  std::vector<std::vector<std::pair<int, int>>> ties;    // groups forced equal
  double eigen_floor = 0.0;

  // fixed + zeros merged, normalized to j <= k.
  std::vector<FixedEntry> all_fixed() const;
  bool has_fixed_diagonal(int j) const;
};

// Structural validation: index ranges, overlaps, diagonal fixes >= floor.
void validate_constraints(const ConstraintSpec& spec);

// Runs the projection on eigen_floor * I and verifies the output satisfies
// every constraint; throws SpecError when the set appears empty.
void check_feasible(const ConstraintSpec& spec);

// Frobenius projection onto {X = X^T : eigmin(X) >= eigen_floor}.
// Symmetrizes inputs that are asymmetric within 1e-12 and rejects worse.
Eigen::MatrixXd project_eigenfloor(const Eigen::MatrixXd& S, double eigen_floor);

// Frobenius projection onto the affine constraint set: overwrites fixed and
// zero positions, replaces each tie group by its mean.
Eigen::MatrixXd project_affine(Eigen::MatrixXd S, const ConstraintSpec& spec);

struct ProjectionInfo {
  bool converged = true;
  int iterations = 0;
  double last_change = 0.0;
  double min_eigenvalue = 0.0;
};

// Dykstra's alternating projection onto the intersection. Ends on the affine
// half-step so element constraints hold exactly; the eigenvalue floor holds
// to tolerance. Non-convergence is reported through `info`, the last iterate
// is still returned.
Eigen::MatrixXd project(const Eigen::MatrixXd& S, const ConstraintSpec& spec,
                        double tol = 1e-10, int maxiter = 10000,
                        ProjectionInfo* info = nullptr);

// True when S satisfies the affine constraints within `tol` (entrywise) and
// has minimum eigenvalue >= eigen_floor - tol.
bool satisfies(const Eigen::MatrixXd& S, const ConstraintSpec& spec, double tol);

}  // namespace mixedreg
