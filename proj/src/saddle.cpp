#include "fehmm/saddle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SparseLU>
#ifdef FEHMM_HAVE_UMFPACK
#include <Eigen/UmfPackSupport>
#endif

namespace fehmm {

void ConstraintSet::add_dirichlet(int dof, double value) {
  require(dof >= 0 && dof < ndof_, ErrorKind::InvalidArgument, "constraint dof out of range");
  rows_.push_back({dof, -1, value});
}

void ConstraintSet::add_difference(int plus, int minus, double value) {
  require(plus >= 0 && plus < ndof_ && minus >= 0 && minus < ndof_ && plus != minus, ErrorKind::InvalidArgument,
          "invalid difference constraint");
  rows_.push_back({plus, minus, value});
}

Vec ConstraintSet::targets() const {
  Vec g(size());
  for (int r = 0; r < size(); ++r) g[r] = rows_[r].target;
  return g;
}

void ConstraintSet::set_targets(const Vec& g) {
  require(g.size() == size(), ErrorKind::InvalidArgument, "constraint target size mismatch");
  for (int r = 0; r < size(); ++r) rows_[r].target = g[r];
}

Vec ConstraintSet::apply(const Vec& d) const {
  Vec out(size());
  for (int r = 0; r < size(); ++r) {
    const auto& row = rows_[r];
    out[r] = d[row.plus] - (row.dirichlet() ? 0.0 : d[row.minus]);
  }
  return out;
}

Vec ConstraintSet::apply_transpose(const Vec& lambda) const {
  Vec out = Vec::Zero(ndof_);
  for (int r = 0; r < size(); ++r) {
    const auto& row = rows_[r];
    out[row.plus] += lambda[r];
    if (!row.dirichlet()) out[row.minus] -= lambda[r];
  }
  return out;
}

bool ConstraintSet::disjoint() const {
  std::vector<char> used(ndof_, 0);
  for (const auto& row : rows_) {
    for (int d : {row.plus, row.minus}) {
      if (d < 0) continue;
      if (used[d]) return false;
      used[d] = 1;
    }
  }
  return true;
}

Vec ConstraintSet::project(const Vec& f) const {
  require(disjoint(), ErrorKind::Unsupported, "null-space projection needs disjoint constraint rows");
  Vec out = f;
  for (const auto& row : rows_) {
    if (row.dirichlet()) {
      out[row.plus] = 0.0;
    } else {
      const double m = 0.5 * (f[row.plus] + f[row.minus]);
      out[row.plus] = m;
      out[row.minus] = m;
    }
  }
  return out;
}

Vec ConstraintSet::least_squares_multipliers(const Vec& f) const {
  require(disjoint(), ErrorKind::Unsupported, "least-squares multipliers need disjoint constraint rows");
  Vec lambda(size());
  for (int r = 0; r < size(); ++r) {
    const auto& row = rows_[r];
    lambda[r] = row.dirichlet() ? -f[row.plus] : -0.5 * (f[row.plus] - f[row.minus]);
  }
  return lambda;
}

void ConstraintSet::validate() const {
  if (disjoint()) return;
  // Overlapping supports: rank test on the dense matrix, row by row.
  std::vector<int> cols;
  for (const auto& row : rows_) {
    cols.push_back(row.plus);
    if (!row.dirichlet()) cols.push_back(row.minus);
  }
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  auto col_of = [&](int d) { return static_cast<int>(std::lower_bound(cols.begin(), cols.end(), d) - cols.begin()); };
  Mat G = Mat::Zero(size(), static_cast<Eigen::Index>(cols.size()));
  for (int r = 0; r < size(); ++r) {
    G(r, col_of(rows_[r].plus)) = 1.0;
    if (!rows_[r].dirichlet()) G(r, col_of(rows_[r].minus)) = -1.0;
  }
  std::vector<int> bad;
  Mat basis(0, G.cols());
  for (int r = 0; r < size(); ++r) {
    Mat trial(basis.rows() + 1, G.cols());
    trial << basis, G.row(r);
    Eigen::ColPivHouseholderQR<Mat> qr(trial.transpose());
    qr.setThreshold(1e-10);
    if (qr.rank() < trial.rows()) {
      bad.push_back(r);
    } else {
      basis = trial;
    }
  }
  if (!bad.empty()) {
    std::ostringstream os;
    os << "constraint matrix is rank deficient; redundant rows:";
    for (int r : bad) os << ' ' << r;
    throw Error(ErrorKind::ConstraintRedundancy, os.str());
  }
}

SpMat ConstraintSet::matrix() const {
  std::vector<Eigen::Triplet<double>> t;
  for (int r = 0; r < size(); ++r) {
    t.emplace_back(r, rows_[r].plus, 1.0);
    if (!rows_[r].dirichlet()) t.emplace_back(r, rows_[r].minus, -1.0);
  }
  SpMat G(size(), ndof_);
  G.setFromTriplets(t.begin(), t.end());
  return G;
}

namespace {

constexpr int kDenseLimit = 96;

}  // namespace

struct SaddlePointSolver::Impl {
  int n = 0;
  int m = 0;
  double scale = 1.0;  // G rows are multiplied by this to balance the blocks
  SpMat A;
  Eigen::FullPivLU<Mat> dense;
#ifdef FEHMM_HAVE_UMFPACK
  Eigen::UmfPackLU<SpMat> sparse;
#else
  Eigen::SparseLU<SpMat> sparse;
#endif
  bool use_dense = false;
  mutable double worst = 0.0;

  Mat raw_solve(const Mat& b) const {
    if (use_dense) return dense.solve(b);
    return sparse.solve(b);
  }
};

SaddlePointSolver::SaddlePointSolver() : impl_(std::make_unique<Impl>()) {}
SaddlePointSolver::~SaddlePointSolver() = default;
SaddlePointSolver::SaddlePointSolver(SaddlePointSolver&&) noexcept = default;
SaddlePointSolver& SaddlePointSolver::operator=(SaddlePointSolver&&) noexcept = default;

int SaddlePointSolver::num_unknowns() const { return impl_->n + impl_->m; }
double SaddlePointSolver::worst_relative_residual() const { return impl_->worst; }

void SaddlePointSolver::factorize(const SpMat& K, const ConstraintSet& constraints) {
  require(K.rows() == K.cols(), ErrorKind::InvalidArgument, "stiffness must be square");
  require(constraints.ndof() == K.rows(), ErrorKind::InvalidArgument, "constraint/stiffness size mismatch");
  Impl& s = *impl_;
  s.n = static_cast<int>(K.rows());
  s.m = constraints.size();
  double diag = 0.0;
  for (int i = 0; i < s.n; ++i) diag = std::max(diag, std::abs(K.coeff(i, i)));
  s.scale = diag > 0.0 ? diag : 1.0;

  std::vector<Eigen::Triplet<double>> t;
  t.reserve(K.nonZeros() + 4 * s.m);
  for (int c = 0; c < K.outerSize(); ++c)
    for (SpMat::InnerIterator it(K, c); it; ++it) t.emplace_back(it.row(), it.col(), it.value());
  for (int r = 0; r < s.m; ++r) {
    const auto& row = constraints.rows()[r];
    t.emplace_back(s.n + r, row.plus, s.scale);
    t.emplace_back(row.plus, s.n + r, s.scale);
    if (!row.dirichlet()) {
      t.emplace_back(s.n + r, row.minus, -s.scale);
      t.emplace_back(row.minus, s.n + r, -s.scale);
    }
  }
  const int N = s.n + s.m;
  s.A.resize(N, N);
  s.A.setFromTriplets(t.begin(), t.end());
  s.A.makeCompressed();

  s.use_dense = N <= kDenseLimit;
  if (s.use_dense) {
    s.dense.compute(Mat(s.A));
    if (s.dense.rank() < N) {
      std::ostringstream os;
      os << "saddle-point matrix is singular (rank " << s.dense.rank() << " of " << N
         << ", max pivot " << s.dense.maxPivot() << ")";
      throw Error(ErrorKind::SingularSystem, os.str());
    }
    return;
  }
  s.sparse.compute(s.A);
  if (s.sparse.info() != Eigen::Success)
    throw Error(ErrorKind::SingularSystem,
                "sparse factorization of the " + std::to_string(N) + "x" + std::to_string(N) +
                    " saddle-point matrix failed (zero or tiny pivot)");
}

SaddlePointSolver::Solution SaddlePointSolver::solve(const Mat& f, const Mat& g) const {
  const Impl& s = *impl_;
  require(f.rows() == s.n && g.rows() == s.m && f.cols() == g.cols(), ErrorKind::InvalidArgument,
          "saddle right-hand side has wrong shape");
  Mat b(s.n + s.m, f.cols());
  b.topRows(s.n) = f;
  b.bottomRows(s.m) = s.scale * g;
  Mat z = s.raw_solve(b);
  for (int pass = 0; pass < 2; ++pass) {
    const Mat r = b - s.A * z;
    double rel = 0.0;
    for (int c = 0; c < b.cols(); ++c) {
      const double bn = b.col(c).norm();
      rel = std::max(rel, bn > 0.0 ? r.col(c).norm() / bn : r.col(c).norm());
    }
    if (!std::isfinite(rel) || rel > 1e-6) {
      if (pass == 1 || !std::isfinite(rel))
        throw Error(ErrorKind::SingularSystem, "saddle-point solve is inaccurate (relative residual " +
                                                   std::to_string(rel) + ")");
    }
    if (rel <= 1e-13 || pass == 1) {
      s.worst = std::max(s.worst, rel);
      break;
    }
    z += s.raw_solve(r);
  }
  Solution out;
  out.x = z.topRows(s.n);
  out.lambda = s.scale * z.bottomRows(s.m);
  return out;
}

SaddlePointSolver::Solution solve_saddle(const SpMat& K, const ConstraintSet& constraints, const Vec& f,
                                         const Vec& g) {
  SaddlePointSolver solver;
  solver.factorize(K, constraints);
  return solver.solve(f, g);
}

}  // namespace fehmm
