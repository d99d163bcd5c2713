#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>

#include "seg/errors.hpp"
#include "seg/quadgame.hpp"
#include "seg/sampling.hpp"
#include "test_util.hpp"

using namespace seg;
using namespace seg::testing;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("seg_test_" + name);
}

double lambda_min(const Eigen::MatrixXd& S) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues().minCoeff();
}
double lambda_max(const Eigen::MatrixXd& S) {
  return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues().maxCoeff();
}

}  // namespace

TEST(GenerateGame, ScalarGameIsTheTwoByTwoExample) {
  GameGenConfig c;
  c.n = 1;
  c.d = c.p = 1;
  c.mu_A = c.L_A = 2;
  c.mu_C = c.L_C = 2;
  c.mu_B = c.L_B = 1;
  c.bias_scale = 0.0;
  const auto g = generate_game(c);
  const auto op = game_to_operator(g);
  const auto& M = op.component(0).matrix();
  EXPECT_DOUBLE_EQ(M(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(M(1, 1), 2.0);
  EXPECT_DOUBLE_EQ(std::abs(M(0, 1)), 1.0);
  EXPECT_DOUBLE_EQ(M(1, 0), -M(0, 1));
  EXPECT_EQ(op.component(0).offset(), Point<double>::Zero(2));
}

TEST(GenerateGame, SpectraInsideBandsAndSymmetric) {
  GameGenConfig c = small_game(12, 8, 21);
  c.p = 6;
  const auto g = generate_game(c);
  for (Index i = 0; i < g.n(); ++i) {
    const auto& A = g.A[static_cast<std::size_t>(i)];
    const auto& C = g.C[static_cast<std::size_t>(i)];
    EXPECT_LE((A - A.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((C - C.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(lambda_min(A), c.mu_A - 1e-9);
    EXPECT_LE(lambda_max(A), c.L_A + 1e-9);
    EXPECT_GE(lambda_min(C), c.mu_C - 1e-9);
    EXPECT_LE(lambda_max(C), c.L_C + 1e-9);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(g.B[static_cast<std::size_t>(i)]);
    EXPECT_LE(svd.singularValues().maxCoeff(), c.L_B + 1e-9);
    EXPECT_GE(svd.singularValues().minCoeff(), c.mu_B - 1e-9);
  }
  // Endpoints are attained by component 0.
  EXPECT_NEAR(lambda_min(g.A[0]), c.mu_A, 1e-9);
  EXPECT_NEAR(lambda_max(g.A[0]), c.L_A, 1e-9);
  EXPECT_NEAR(lambda_min(g.C[0]), c.mu_C, 1e-9);
  EXPECT_NEAR(lambda_max(g.C[0]), c.L_C, 1e-9);
}

TEST(GenerateGame, DefaultSizeSpectra) {
  GameGenConfig c;  // n = 100, d = p = 100
  c.n = 3;          // a slice of the default family keeps the test quick
  c.seed = 5;
  const auto g = generate_game(c);
  for (const auto& A : g.A) {
    EXPECT_GE(lambda_min(A), 0.1 - 1e-9);
    EXPECT_LE(lambda_max(A), 1.0 + 1e-9);
  }
}

TEST(GenerateGame, Deterministic) {
  const auto c = small_game(6, 5, 99);
  EXPECT_TRUE(generate_game(c) == generate_game(c));
  auto c2 = c;
  c2.seed = 100;
  EXPECT_FALSE(generate_game(c) == generate_game(c2));
}

TEST(GenerateGame, InvalidBands) {
  GameGenConfig c = small_game(2, 2, 1);
  c.mu_A = 2.0;
  EXPECT_THROW(generate_game(c), ValidationError);
  c = small_game(2, 2, 1);
  c.mu_B = -0.1;
  EXPECT_THROW(generate_game(c), ValidationError);
  c = small_game(0, 2, 1);
  EXPECT_THROW(generate_game(c), ValidationError);
}

TEST(GameToOperator, ScalarBlocks) {
  QuadraticGame g;
  g.A = {Eigen::MatrixXd::Constant(1, 1, 2)};
  g.B = {Eigen::MatrixXd::Constant(1, 1, 1)};
  g.C = {Eigen::MatrixXd::Constant(1, 1, 2)};
  g.a = {Eigen::VectorXd::Constant(1, 1)};
  g.c = {Eigen::VectorXd::Constant(1, 1)};
  const auto op = game_to_operator(g);
  DenseMatrix<double> M(2, 2);
  M << 2, 1, -1, 2;
  EXPECT_EQ(op.component(0).matrix(), M);
  EXPECT_EQ(op.component(0).offset(), vec({1, 1}));
}

TEST(GameToOperator, ZeroGame) {
  QuadraticGame g;
  g.A = {Eigen::MatrixXd::Zero(2, 2)};
  g.B = {Eigen::MatrixXd::Zero(2, 1)};
  g.C = {Eigen::MatrixXd::Zero(1, 1)};
  g.a = {Eigen::VectorXd::Zero(2)};
  g.c = {Eigen::VectorXd::Zero(1)};
  const auto op = game_to_operator(g);
  EXPECT_EQ(eval_full(op, vec({3, -1, 2})), Point<double>::Zero(3));
}

// Property: the coupling blocks cancel in the symmetric part, so mu_i is
// min(lambda_min(A_i), lambda_min(C_i)); checked against explicit
// symmetrization on random 4x4 instances.
TEST(GameToOperator, SymmetricPartIsBlockDiagonal) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto g = generate_game(small_game(3, 2, seed));
    const auto op = game_to_operator(g);
    for (Index i = 0; i < g.n(); ++i) {
      const auto& M = op.component(i).matrix();
      const Eigen::MatrixXd S = (M + M.transpose()) / 2.0;
      EXPECT_LE(S.topRightCorner(2, 2).cwiseAbs().maxCoeff(), 1e-15);
      const auto k = static_cast<std::size_t>(i);
      const double oracle = std::min(lambda_min(g.A[k]), lambda_min(g.C[k]));
      EXPECT_NEAR(component_constants(op, i).mu, oracle, 1e-9);
    }
  }
}

TEST(GameToOperator, PositiveSpectraGiveSolvableProblem) {
  const auto g = generate_game(small_game(10, 4, 8));
  const auto op = game_to_operator(g);
  EXPECT_GE(operator_constants(op).mu, 0.1 - 1e-9);
  EXPECT_LE(eval_full(op, solve_root(op)).norm(), 1e-10);
}

TEST(GenerateGame, LmaxOverride) {
  auto c = small_game(6, 3, 4);
  c.lmax_override = std::make_pair(Index{0}, 20.0);
  const auto op = game_to_operator(generate_game(c));
  EXPECT_NEAR(component_constants(op, 0).L, 20.0, 1e-9);
  for (Index i = 1; i < op.size(); ++i) EXPECT_NEAR(component_constants(op, i).L, 1.0, 1e-9);
}

TEST(GenerateGame, NegativeMuComponent) {
  auto c = small_game(8, 3, 4);
  c.negative_mu_component = Index{2};
  const auto op = game_to_operator(generate_game(c));
  std::vector<double> mus;
  for (Index i = 0; i < op.size(); ++i) mus.push_back(component_constants(op, i).mu);
  EXPECT_LT(mus[2], 0.0);
  for (std::size_t i = 0; i < mus.size(); ++i)
    if (i != 2) EXPECT_GT(mus[i], 0.0);
  EXPECT_GT(mu_bar(mus), 0.0);
}

TEST(GameFile, RoundTripIsBitExact) {
  auto c = small_game(4, 3, 17);
  c.p = 2;
  c.lmax_override = std::make_pair(Index{1}, 5.0);
  const auto g = generate_game(c);
  const auto path = temp_file("roundtrip.qgame");
  save_game(g, path);
  const auto h = load_game(path);
  EXPECT_TRUE(g == h);
  EXPECT_EQ(h.config, c);
  std::filesystem::remove(path);
}

TEST(GameFile, TruncatedAndCorrupt) {
  const auto g = generate_game(small_game(2, 2, 3));
  const auto path = temp_file("trunc.qgame");
  save_game(g, path);
  const auto size = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, size - 3);
  EXPECT_THROW(load_game(path), FormatError);

  std::ofstream(path, std::ios::binary | std::ios::trunc) << "NOTAGAME";
  EXPECT_THROW(load_game(path), FormatError);
  std::filesystem::remove(path);
}

TEST(GameFile, VersionMismatchAndEmptyGame) {
  const auto path = temp_file("hdr.qgame");
  auto write = [&](std::uint32_t version, const std::string& header) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    os.write("QGAME\0\0\0", 8);
    for (int b = 0; b < 4; ++b) os.put(static_cast<char>((version >> (8 * b)) & 0xff));
    const std::uint64_t len = header.size();
    for (int b = 0; b < 8; ++b) os.put(static_cast<char>((len >> (8 * b)) & 0xff));
    os << header;
  };
  const std::string cfg = config_json(small_game(1, 1, 0));
  write(1, R"({"format":"qgame","n":0,"d":1,"p":1,"config":)" + cfg + "}");
  EXPECT_THROW(load_game(path), ValidationError);
  write(2, R"({"format":"qgame","n":1,"d":1,"p":1,"config":)" + cfg + "}");
  EXPECT_THROW(load_game(path), FormatError);
  std::filesystem::remove(path);
}
