#pragma once

#include "fehmm/common.hpp"

#include <memory>
#include <vector>

namespace fehmm {

/// One scalar constraint: u[plus] - u[minus] = target, or u[plus] = target
/// when minus < 0 (Dirichlet row).
struct ConstraintRow {
  int plus = -1;
  int minus = -1;
  double target = 0.0;

  bool dirichlet() const { return minus < 0; }
};

/// Rows of G together with their right-hand values G d̄.
class ConstraintSet {
 public:
  ConstraintSet() = default;
  explicit ConstraintSet(int ndof) : ndof_(ndof) {}

  void add_dirichlet(int dof, double value);
  void add_difference(int plus, int minus, double value);

  int ndof() const { return ndof_; }
  int size() const { return static_cast<int>(rows_.size()); }
  bool empty() const { return rows_.empty(); }
  const std::vector<ConstraintRow>& rows() const { return rows_; }

  Vec targets() const;
  void set_targets(const Vec& g);
  Vec apply(const Vec& d) const;                // G d
  Vec apply_transpose(const Vec& lambda) const;  // G^T lambda
  Vec violation(const Vec& d) const { return apply(d) - targets(); }

  /// Orthogonal projection of f onto null(G). Requires disjoint row supports.
  Vec project(const Vec& f) const;
  /// argmin over lambda of ||f + G^T lambda||. Requires disjoint row supports.
  Vec least_squares_multipliers(const Vec& f) const;
  bool disjoint() const;

  /// Throws constraint-redundancy (naming the offending rows) when G is
  /// rank deficient.
  void validate() const;
  SpMat matrix() const;

 private:
  int ndof_ = 0;
  std::vector<ConstraintRow> rows_;
};

/// Factorization of the monolithic block matrix [[K, G^T], [G, 0]].
class SaddlePointSolver {
 public:
  SaddlePointSolver();
  ~SaddlePointSolver();
  SaddlePointSolver(SaddlePointSolver&&) noexcept;
  SaddlePointSolver& operator=(SaddlePointSolver&&) noexcept;

  /// Throws singular-system when the factorization fails.
  void factorize(const SpMat& K, const ConstraintSet& constraints);

  struct Solution {
    Mat x;       // primal block, one column per right-hand side
    Mat lambda;  // multiplier block
  };

  /// Solves K x + G^T lambda = f, G x = g for each column pair.
  Solution solve(const Mat& f, const Mat& g) const;

  int num_unknowns() const;
  /// Largest relative residual of the block equations seen by this solver.
  double worst_relative_residual() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// One-shot convenience: factorize and solve a single right-hand side.
SaddlePointSolver::Solution solve_saddle(const SpMat& K, const ConstraintSet& constraints, const Vec& f,
                                         const Vec& g);

}  // namespace fehmm
