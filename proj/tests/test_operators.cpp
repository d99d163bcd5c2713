#include <gtest/gtest.h>

#include <cmath>
#include <stdexcept>

#include "seg/errors.hpp"
#include "seg/operators.hpp"
#include "seg/rng.hpp"
#include "test_util.hpp"

using namespace seg;
using namespace seg::testing;

namespace {

DenseMatrix<double> m2() {
  DenseMatrix<double> M(2, 2);
  M << 2, 1, -1, 2;
  return M;
}

Op m2_op() { return Op({Comp::affine(m2(), vec({1, 1}))}); }

// Independent oracle: Cramer's rule for the 2x2 system M x = -b.
Point<double> cramer(const DenseMatrix<double>& M, const Point<double>& b) {
  const double det = M(0, 0) * M(1, 1) - M(0, 1) * M(1, 0);
  return vec({(-b(0) * M(1, 1) + b(1) * M(0, 1)) / det, (-b(1) * M(0, 0) + b(0) * M(1, 0)) / det});
}

}  // namespace

TEST(EvalComponent, Identity) {
  Op op({Comp::identity(1)});
  EXPECT_DOUBLE_EQ(eval_component(op, 0, vec({1}))(0), 1.0);
}

TEST(EvalComponent, AffineAtOriginReturnsOffset) {
  const auto y = eval_component(m2_op(), 0, vec({0, 0}));
  EXPECT_EQ(y, vec({1, 1}));
}

TEST(EvalComponent, AffineAtRootIsZero) {
  const auto root = cramer(m2(), vec({1, 1}));
  EXPECT_NEAR(root(0), -0.2, 1e-15);
  EXPECT_NEAR(root(1), -0.6, 1e-15);
  EXPECT_LE(eval_component(m2_op(), 0, root).norm(), 1e-15);
}

TEST(EvalComponent, Errors) {
  const auto op = m2_op();
  EXPECT_THROW(eval_component(op, 1, vec({0, 0})), std::out_of_range);
  EXPECT_THROW(eval_component(op, -1, vec({0, 0})), std::out_of_range);
  EXPECT_THROW(eval_component(op, 0, vec({0})), DimensionMismatch);
}

TEST(EvalFull, Examples) {
  EXPECT_DOUBLE_EQ(eval_full(Op({Comp::identity(1)}), vec({3}))(0), 3.0);
  EXPECT_DOUBLE_EQ(eval_full(scalar_op({{1, -1}, {1, 1}}), vec({5}))(0), 5.0);
  EXPECT_DOUBLE_EQ(eval_full(scalar_op({{2, 0}, {4, 0}}), vec({1}))(0), 3.0);
  EXPECT_THROW(eval_full(scalar_op({{2, 0}}), vec({1, 2})), DimensionMismatch);
}

TEST(FiniteSum, ConstructionValidates) {
  EXPECT_THROW(Op(std::vector<Comp>{}), ValidationError);
  EXPECT_THROW(Op({Comp::identity(1), Comp::identity(2)}), DimensionMismatch);
  EXPECT_THROW(Comp::affine(DenseMatrix<double>::Identity(2, 3), vec({0, 0})), DimensionMismatch);
}

TEST(AverageInto, MultisetAndEmpty) {
  const auto op = scalar_op({{2, 0}, {5, 0}});
  const std::vector<Index> idx{0, 0, 1};
  Point<double> out;
  average_into(op, std::span<const Index>(idx), vec({1}), out);
  EXPECT_DOUBLE_EQ(out(0), 3.0);
  const std::vector<Index> none;
  EXPECT_THROW(average_into(op, std::span<const Index>(none), vec({1}), out), ValidationError);
}

TEST(SolveRoot, Examples) {
  EXPECT_EQ(solve_root(Op({Comp::identity(3)})), Point<double>::Zero(3));
  const auto x = solve_root(m2_op());
  const auto oracle = cramer(m2(), vec({1, 1}));
  EXPECT_NEAR((x - oracle).norm(), 0.0, 1e-14);
  EXPECT_NEAR(solve_root(scalar_op({{1, -1}, {1, 1}}))(0), 0.0, 1e-15);
}

TEST(SolveRoot, CachesAndHonoursTolerance) {
  const auto op = small_game_op(5, 4, 3);
  EXPECT_FALSE(op.cached_solution());
  const auto x = solve_root(op);
  ASSERT_TRUE(op.cached_solution());
  EXPECT_EQ(*op.cached_solution(), x);
  EXPECT_LE(eval_full(op, x).norm(), 1e-10);
}

TEST(SolveRoot, Errors) {
  EXPECT_THROW(solve_root(scalar_op({{1, 0}, {-1, 0}})), SingularSystem);
  Op bb({Comp::callable(1, [](const Point<double>& x) { return x; }, 1.0, 1.0)});
  EXPECT_THROW(solve_root(bb), Unsupported);
}

TEST(ComponentConstants, Examples) {
  Op id({Comp::identity(3)});
  auto c = component_constants(id, 0);
  EXPECT_NEAR(c.L, 1.0, 1e-14);
  EXPECT_NEAR(c.mu, 1.0, 1e-14);

  c = component_constants(m2_op(), 0);
  EXPECT_NEAR(c.L, std::sqrt(5.0), 1e-14);
  EXPECT_NEAR(c.mu, 2.0, 1e-14);

  c = component_constants(scalar_op({{-1, 0}}), 0);
  EXPECT_NEAR(c.L, 1.0, 1e-15);
  EXPECT_NEAR(c.mu, -1.0, 1e-15);
}

TEST(ComponentConstants, BlackBox) {
  Op without({Comp::callable(1, [](const Point<double>& x) { return x; })});
  EXPECT_THROW(component_constants(without, 0), Unsupported);
  Op with({Comp::callable(1, [](const Point<double>& x) { return 2.0 * x; }, 2.0, 2.0)});
  EXPECT_DOUBLE_EQ(component_constants(with, 0).L, 2.0);
  EXPECT_DOUBLE_EQ(eval_full(with, vec({1.5}))(0), 3.0);
  EXPECT_THROW(Comp::callable(1, [](const Point<double>& x) { return x; }, 1.0, -2.0), ValidationError);
}

TEST(ComponentConstants, FloatScalar) {
  DenseMatrix<float> M(2, 2);
  M << 2, 1, -1, 2;
  FiniteSumOperator<float> op({ComponentOperator<float>::affine(M, Point<float>::Ones(2))});
  const auto c = component_constants(op, 0);
  EXPECT_NEAR(c.L, std::sqrt(5.0f), 1e-5f);
  EXPECT_NEAR(c.mu, 2.0f, 1e-5f);
}

// Property: Lipschitz and quasi-strong monotonicity hold with the computed
// constants on random affine components, and |mu| <= L.
TEST(ComponentConstants, LipschitzAndMonotonicityProperties) {
  CounterRng rng = CounterRng::stream(77, 0, 0);
  for (int inst = 0; inst < 5; ++inst) {
    const Index d = 6;
    DenseMatrix<double> M(d, d);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < d; ++j) M(i, j) = rng.normal();
    Point<double> b(d);
    for (Index i = 0; i < d; ++i) b(i) = rng.normal();
    Op op({Comp::affine(M, b)});
    const auto c = component_constants(op, 0);
    EXPECT_LE(std::abs(c.mu), c.L);
    Point<double> xs = -M.fullPivLu().solve(b);
    for (int t = 0; t < 1000; ++t) {
      Point<double> x(d), y(d);
      for (Index i = 0; i < d; ++i) {
        x(i) = rng.normal();
        y(i) = rng.normal();
      }
      const auto Fx = eval_component(op, 0, x), Fy = eval_component(op, 0, y);
      EXPECT_LE((Fx - Fy).norm(), c.L * (x - y).norm() + 1e-9);
      const double lhs = (Fx - eval_component(op, 0, xs)).dot(x - xs);
      EXPECT_GE(lhs, c.mu * (x - xs).squaredNorm() - 1e-9);
    }
  }
}

TEST(OperatorConstants, FullOperatorUsesAveragedMatrix) {
  const auto op = scalar_op({{1, 0}, {3, 0}});
  const auto c = operator_constants(op);
  EXPECT_DOUBLE_EQ(c.L, 2.0);
  EXPECT_DOUBLE_EQ(c.mu, 2.0);
}
