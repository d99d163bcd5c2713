#ifndef SEG_QUADGAME_HPP
#define SEG_QUADGAME_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "seg/operators.hpp"
#include "seg/rng.hpp"

namespace seg {

/// Parameters of the random bilinearly coupled quadratic game
///   min_{x1} max_{x2} (1/n) sum_i  x1'A_i x1/2 + x1'B_i x2 - x2'C_i x2/2 + a_i'x1 - c_i'x2.
struct GameGenConfig {
  Index n = 100;
  Index d = 100;
  Index p = 100;
  double mu_A = 0.1, L_A = 1.0;
  double mu_B = 0.0, L_B = 1.0;
  double mu_C = 0.1, L_C = 1.0;
  std::uint64_t seed = 0;
  // Multiplies the Gaussian offsets a_i, c_i. Zero gives an interpolation-free
  // homogeneous game with x* = 0.
  double bias_scale = 1.0;
  // (component, L_max): that component is rescaled to Lipschitz constant
  // L_max and every other component to Lipschitz constant 1.
  std::optional<std::pair<Index, double>> lmax_override;
  std::optional<Index> negative_mu_component;

  void validate() const;
  bool operator==(const GameGenConfig&) const = default;
};

struct QuadraticGame {
  GameGenConfig config;
  std::vector<Eigen::MatrixXd> A, B, C;
  std::vector<Eigen::VectorXd> a, c;

  Index n() const { return static_cast<Index>(A.size()); }
  Index d() const { return A.empty() ? 0 : A.front().rows(); }
  Index p() const { return C.empty() ? 0 : C.front().rows(); }

  // Exact (bitwise for finite values) equality of every block and of config.
  bool operator==(const QuadraticGame& o) const;
};

/// Uniformly distributed orthogonal factor with a sign-fixed QR so the
/// result is a deterministic function of the Gaussian draws.
Eigen::MatrixXd random_orthogonal(Index k, CounterRng& rng);

QuadraticGame generate_game(const GameGenConfig& cfg);

/// Compact JSON rendering of a generator configuration.
std::string config_json(const GameGenConfig& cfg);

/// Component i becomes M_i = [[A_i, B_i], [-B_i', C_i]] with offset (a_i, c_i).
FiniteSumOperator<double> game_to_operator(const QuadraticGame& g);

void save_game(const QuadraticGame& g, const std::filesystem::path& path);
QuadraticGame load_game(const std::filesystem::path& path);

}  // namespace seg

#endif
