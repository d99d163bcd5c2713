#ifndef SEG_OPERATORS_HPP
#define SEG_OPERATORS_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seg/errors.hpp"

namespace seg {

using Index = Eigen::Index;

template <typename Scalar>
using Point = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using DenseMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Lipschitz constant and (possibly negative) quasi-strong monotonicity
/// constant of one operator.
template <typename Scalar>
struct Constants {
  Scalar L;
  Scalar mu;
};

template <typename Scalar>
class ComponentOperator {
 public:
  using Vector = Point<Scalar>;
  using Matrix = DenseMatrix<Scalar>;
  using Callable = std::function<Vector(const Vector&)>;

  // F(x) = M x + b
  static ComponentOperator affine(Matrix M, Vector b) {
    if (M.rows() != M.cols() || M.rows() != b.size())
      throw DimensionMismatch("affine component needs square M matching b");
    ComponentOperator c;
    c.dim_ = b.size();
    c.M_ = std::move(M);
    c.b_ = std::move(b);
    return c;
  }

  static ComponentOperator identity(Index dim) {
    return affine(Matrix::Identity(dim, dim), Vector::Zero(dim));
  }

  /// Black-box component. Constants are taken as given; mu is understood
  /// relative to the solution of the full problem.
  static ComponentOperator callable(Index dim, Callable f, std::optional<Scalar> L = std::nullopt,
                                    std::optional<Scalar> mu = std::nullopt) {
    if (L && *L < 0) throw ValidationError("Lipschitz constant must be nonnegative");
    if (L && mu && std::abs(*mu) > *L) throw ValidationError("|mu| must not exceed L");
    ComponentOperator c;
    c.dim_ = dim;
    c.f_ = std::move(f);
    c.L_ = L;
    c.mu_ = mu;
    return c;
  }

  bool is_affine() const { return !f_; }
  Index dim() const { return dim_; }
  const Matrix& matrix() const { return M_; }
  const Vector& offset() const { return b_; }
  const std::optional<Scalar>& lipschitz() const { return L_; }
  const std::optional<Scalar>& quasi_mono() const { return mu_; }

  // out += F(x)
  template <typename Derived>
  void accumulate(const Eigen::MatrixBase<Derived>& x, Vector& out) const {
    if (f_) {
      out += f_(Vector(x));
    } else {
      out.noalias() += M_ * x;
      out += b_;
    }
  }

  template <typename Derived>
  Vector operator()(const Eigen::MatrixBase<Derived>& x) const {
    Vector out = Vector::Zero(dim_);
    accumulate(x, out);
    return out;
  }

 private:
  ComponentOperator() = default;

  Index dim_ = 0;
  Matrix M_;
  Vector b_;
  Callable f_;
  std::optional<Scalar> L_;
  std::optional<Scalar> mu_;
};

/// F(x) = (1/n) sum_i F_i(x).
///
/// Copies share one lazily filled cache (solution and spectral constants).
/// The cache is guarded by a mutex so concurrent readers are safe.
template <typename Scalar>
class FiniteSumOperator {
 public:
  using Component = ComponentOperator<Scalar>;
  using Vector = Point<Scalar>;

  explicit FiniteSumOperator(std::vector<Component> components)
      : components_(std::move(components)), cache_(std::make_shared<Cache>()) {
    if (components_.empty()) throw ValidationError("finite-sum operator needs n >= 1");
    for (const auto& c : components_)
      if (c.dim() != components_.front().dim())
        throw DimensionMismatch("components must share one dimension");
    cache_->constants.resize(components_.size());
  }

  Index size() const { return static_cast<Index>(components_.size()); }
  Index dim() const { return components_.front().dim(); }

  const Component& component(Index i) const {
    if (i < 0 || i >= size())
      throw std::out_of_range("component index " + std::to_string(i) + " out of range");
    return components_[static_cast<std::size_t>(i)];
  }

  bool all_affine() const {
    return std::all_of(components_.begin(), components_.end(),
                       [](const Component& c) { return c.is_affine(); });
  }

  std::optional<Vector> cached_solution() const {
    std::lock_guard lock(cache_->m);
    return cache_->solution;
  }

  void set_cached_solution(Vector x) const {
    std::lock_guard lock(cache_->m);
    cache_->solution = std::move(x);
  }

  std::optional<Constants<Scalar>> cached_constants(Index i) const {
    std::lock_guard lock(cache_->m);
    return cache_->constants[static_cast<std::size_t>(i)];
  }

  void set_cached_constants(Index i, Constants<Scalar> c) const {
    std::lock_guard lock(cache_->m);
    cache_->constants[static_cast<std::size_t>(i)] = c;
  }

 private:
  struct Cache {
    std::mutex m;
    std::optional<Vector> solution;
    std::vector<std::optional<Constants<Scalar>>> constants;
  };

  std::vector<Component> components_;
  std::shared_ptr<Cache> cache_;
};

namespace detail {

template <typename Scalar, typename Derived>
void check_dim(const FiniteSumOperator<Scalar>& op, const Eigen::MatrixBase<Derived>& x) {
  if (x.size() != op.dim())
    throw DimensionMismatch("point has dimension " + std::to_string(x.size()) + ", operator has " +
                            std::to_string(op.dim()));
}

}  // namespace detail

template <typename Scalar, typename Derived>
Point<Scalar> eval_component(const FiniteSumOperator<Scalar>& op, Index i,
                             const Eigen::MatrixBase<Derived>& x) {
  const auto& c = op.component(i);
  detail::check_dim(op, x);
  return c(x);
}

/// out = (1/|idx|) sum_{i in idx} F_i(x), with multiplicity. The summation
/// order follows idx, which makes the full-index case bit-identical to
/// eval_full.
template <typename Scalar, typename Derived>
void average_into(const FiniteSumOperator<Scalar>& op, std::span<const Index> idx,
                  const Eigen::MatrixBase<Derived>& x, Point<Scalar>& out) {
  if (idx.empty()) throw ValidationError("cannot average over an empty index set");
  detail::check_dim(op, x);
  out.setZero(op.dim());
  for (Index i : idx) op.component(i).accumulate(x, out);
  out /= static_cast<Scalar>(idx.size());
}

template <typename Scalar, typename Derived>
void eval_full_into(const FiniteSumOperator<Scalar>& op, const Eigen::MatrixBase<Derived>& x,
                    Point<Scalar>& out) {
  detail::check_dim(op, x);
  out.setZero(op.dim());
  for (Index i = 0; i < op.size(); ++i) op.component(i).accumulate(x, out);
  out /= static_cast<Scalar>(op.size());
}

template <typename Scalar, typename Derived>
Point<Scalar> eval_full(const FiniteSumOperator<Scalar>& op, const Eigen::MatrixBase<Derived>& x) {
  Point<Scalar> out;
  eval_full_into(op, x, out);
  return out;
}

/// (Mbar, bbar) with Mbar = (1/n) sum M_i.
template <typename Scalar>
std::pair<DenseMatrix<Scalar>, Point<Scalar>> averaged_affine(const FiniteSumOperator<Scalar>& op,
                                                              std::span<const Index> idx) {
  if (idx.empty()) throw ValidationError("cannot average over an empty index set");
  const Index d = op.dim();
  DenseMatrix<Scalar> M = DenseMatrix<Scalar>::Zero(d, d);
  Point<Scalar> b = Point<Scalar>::Zero(d);
  for (Index i : idx) {
    const auto& c = op.component(i);
    if (!c.is_affine()) throw Unsupported("component " + std::to_string(i) + " is not affine");
    M += c.matrix();
    b += c.offset();
  }
  M /= static_cast<Scalar>(idx.size());
  b /= static_cast<Scalar>(idx.size());
  return {std::move(M), std::move(b)};
}

template <typename Scalar>
std::vector<Index> all_indices(const FiniteSumOperator<Scalar>& op) {
  std::vector<Index> idx(static_cast<std::size_t>(op.size()));
  std::iota(idx.begin(), idx.end(), Index{0});
  return idx;
}

template <typename Scalar>
std::pair<DenseMatrix<Scalar>, Point<Scalar>> averaged_affine(const FiniteSumOperator<Scalar>& op) {
  const auto idx = all_indices(op);
  return averaged_affine(op, std::span<const Index>(idx));
}

/// L = largest singular value, mu = smallest eigenvalue of (M + M^T)/2.
/// Rounding can push |mu| a hair past L; the result is clamped so that
/// |mu| <= L always holds.
template <typename Derived>
Constants<typename Derived::Scalar> matrix_constants(const Eigen::MatrixBase<Derived>& M) {
  using Scalar = typename Derived::Scalar;
  if (M.size() == 0) return {Scalar(0), Scalar(0)};
  DenseMatrix<Scalar> Md = M;
  const Scalar L = Eigen::BDCSVD<DenseMatrix<Scalar>>(Md).singularValues()(0);
  const DenseMatrix<Scalar> S = (Md + Md.transpose()) / Scalar(2);
  Scalar mu = Eigen::SelfAdjointEigenSolver<DenseMatrix<Scalar>>(S, Eigen::EigenvaluesOnly)
                  .eigenvalues()(0);
  mu = std::clamp(mu, -L, L);
  return {L, mu};
}

template <typename Scalar>
Constants<Scalar> component_constants(const FiniteSumOperator<Scalar>& op, Index i) {
  const auto& c = op.component(i);
  if (!c.is_affine()) {
    if (!c.lipschitz() || !c.quasi_mono())
      throw Unsupported("black-box component " + std::to_string(i) + " has no supplied constants");
    return {*c.lipschitz(), *c.quasi_mono()};
  }
  if (auto cached = op.cached_constants(i)) return *cached;
  const auto k = matrix_constants(c.matrix());
  op.set_cached_constants(i, k);
  return k;
}

/// Constants of the full operator, computed from Mbar.
template <typename Scalar>
Constants<Scalar> operator_constants(const FiniteSumOperator<Scalar>& op) {
  return matrix_constants(averaged_affine(op).first);
}

/// Default root tolerance: 1e-10 in double, a few hundred ulps otherwise.
template <typename Scalar>
Scalar default_root_tolerance() {
  return std::max(Scalar(1e-10), Scalar(256) * std::numeric_limits<Scalar>::epsilon());
}

/// Solves Mbar x = -bbar by full-pivot LU with a few refinement sweeps, and
/// caches the root on the operator.
template <typename Scalar>
Point<Scalar> solve_root(const FiniteSumOperator<Scalar>& op,
                         Scalar tol = default_root_tolerance<Scalar>()) {
  if (auto x = op.cached_solution()) {
    if (eval_full(op, *x).norm() <= tol) return *x;
  }
  if (!op.all_affine()) throw Unsupported("root solving needs affine components");
  const auto [M, b] = averaged_affine(op);
  Eigen::FullPivLU<DenseMatrix<Scalar>> lu(M);
  if (!lu.isInvertible()) throw SingularSystem("averaged matrix is singular (mu = 0 problem)");
  Point<Scalar> x = lu.solve(-b);
  Point<Scalar> r = eval_full(op, x);
  for (int sweep = 0; sweep < 4 && r.norm() > tol; ++sweep) {
    x -= lu.solve(r);
    r = eval_full(op, x);
  }
  if (!(r.norm() <= tol))
    throw SingularSystem("root residual " + std::to_string(static_cast<double>(r.norm())) +
                         " above tolerance; averaged matrix is too ill-conditioned");
  op.set_cached_solution(x);
  return x;
}

}  // namespace seg

#endif
