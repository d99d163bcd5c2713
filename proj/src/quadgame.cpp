#include "seg/quadgame.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <json.hpp>
#include <string>

#include "seg/sampling.hpp"

namespace seg {

namespace {

constexpr char kMagic[8] = {'Q', 'G', 'A', 'M', 'E', '\0', '\0', '\0'};
constexpr std::uint32_t kVersion = 1;

void fill_gaussian(Eigen::MatrixXd& m, CounterRng& rng) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = rng.normal();
}

Eigen::VectorXd uniform_band(Index k, double lo, double hi, CounterRng& rng) {
  Eigen::VectorXd v(k);
  for (Index i = 0; i < k; ++i) v(i) = rng.uniform(lo, hi);
  return v;
}

// Puts hi in slot 1 and lo in slot 0, so with one slot the lower end wins.
void force_endpoints(Eigen::VectorXd& v, double lo, double hi) {
  if (v.size() == 0) return;
  v(std::min<Index>(1, v.size() - 1)) = hi;
  v(0) = lo;
}

Eigen::MatrixXd block_matrix(const QuadraticGame& g, Index i) {
  const auto k = static_cast<std::size_t>(i);
  const Index d = g.d(), p = g.p();
  Eigen::MatrixXd M(d + p, d + p);
  M.topLeftCorner(d, d) = g.A[k];
  M.topRightCorner(d, p) = g.B[k];
  M.bottomLeftCorner(p, d) = -g.B[k].transpose();
  M.bottomRightCorner(p, p) = g.C[k];
  return M;
}

bool bit_equal(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  return x.rows() == y.rows() && x.cols() == y.cols() &&
         std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) == 0;
}

std::uint64_t to_le(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap64(v);
  return v;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  v = to_le(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u32(std::ostream& os, std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_block(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) write_u64(os, std::bit_cast<std::uint64_t>(m(r, c)));
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw FormatError("truncated game file");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    read(&v, sizeof v);
    return to_le(v);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, sizeof v);
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
    return v;
  }
  Eigen::MatrixXd block(Index rows, Index cols) {
    const auto need = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (pos_ + need > bytes_.size()) throw FormatError("truncated game file");
    Eigen::MatrixXd m(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c) m(r, c) = std::bit_cast<double>(u64());
    return m;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::string bytes_;
  std::size_t pos_ = 0;
};

nlohmann::json config_to_json(const GameGenConfig& c) {
  nlohmann::json j = {{"n", c.n},         {"d", c.d},         {"p", c.p},
                      {"mu_A", c.mu_A},   {"L_A", c.L_A},     {"mu_B", c.mu_B},
                      {"L_B", c.L_B},     {"mu_C", c.mu_C},   {"L_C", c.L_C},
                      {"seed", c.seed},   {"bias_scale", c.bias_scale}};
  j["lmax_override"] = c.lmax_override
                           ? nlohmann::json::array({c.lmax_override->first, c.lmax_override->second})
                           : nlohmann::json(nullptr);
  j["negative_mu_component"] =
      c.negative_mu_component ? nlohmann::json(*c.negative_mu_component) : nlohmann::json(nullptr);
  return j;
}

GameGenConfig config_from_json(const nlohmann::json& j) {
  GameGenConfig c;
  c.n = j.at("n").get<Index>();
  c.d = j.at("d").get<Index>();
  c.p = j.at("p").get<Index>();
  c.mu_A = j.at("mu_A").get<double>();
  c.L_A = j.at("L_A").get<double>();
  c.mu_B = j.at("mu_B").get<double>();
  c.L_B = j.at("L_B").get<double>();
  c.mu_C = j.at("mu_C").get<double>();
  c.L_C = j.at("L_C").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.bias_scale = j.at("bias_scale").get<double>();
  if (const auto& o = j.at("lmax_override"); !o.is_null())
    c.lmax_override = std::make_pair(o.at(0).get<Index>(), o.at(1).get<double>());
  if (const auto& o = j.at("negative_mu_component"); !o.is_null())
    c.negative_mu_component = o.get<Index>();
  return c;
}

}  // namespace

void GameGenConfig::validate() const {
  if (n < 1 || d < 1 || p < 1) throw ValidationError("n, d, p must be positive");
  auto band = [](double lo, double hi, const char* name) {
    if (!(lo >= 0.0 && lo <= hi && std::isfinite(hi)))
      throw ValidationError(std::string("invalid spectrum band for ") + name);
  };
  band(mu_A, L_A, "A");
  band(mu_B, L_B, "B");
  band(mu_C, L_C, "C");
  if (!std::isfinite(bias_scale)) throw ValidationError("bias_scale must be finite");
  if (lmax_override) {
    if (lmax_override->first < 0 || lmax_override->first >= n)
      throw ValidationError("lmax_override index out of range");
    if (!(lmax_override->second > 0.0)) throw ValidationError("L_max must be positive");
  }
  if (negative_mu_component && (*negative_mu_component < 0 || *negative_mu_component >= n))
    throw ValidationError("negative_mu_component out of range");
}

bool QuadraticGame::operator==(const QuadraticGame& o) const {
  if (!(config == o.config) || n() != o.n()) return false;
  for (std::size_t i = 0; i < A.size(); ++i) {
    if (!bit_equal(A[i], o.A[i]) || !bit_equal(B[i], o.B[i]) || !bit_equal(C[i], o.C[i]) ||
        !bit_equal(a[i], o.a[i]) || !bit_equal(c[i], o.c[i]))
      return false;
  }
  return true;
}

Eigen::MatrixXd random_orthogonal(Index k, CounterRng& rng) {
  Eigen::MatrixXd G(k, k);
  fill_gaussian(G, rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(G);
  Eigen::MatrixXd Q = qr.householderQ();
  const Eigen::MatrixXd& R = qr.matrixQR();
  for (Index j = 0; j < k; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

QuadraticGame generate_game(const GameGenConfig& cfg) {
  cfg.validate();
  const Index n = cfg.n, d = cfg.d, p = cfg.p, k = std::min(d, p);
  CounterRng rng = CounterRng::stream(cfg.seed, 0, 0);

  struct Factors {
    Eigen::MatrixXd QA, QC, U, V;
    Eigen::VectorXd DA, DC, S;
  };
  std::vector<Factors> f(static_cast<std::size_t>(n));

  QuadraticGame g;
  g.config = cfg;
  g.a.resize(f.size());
  g.c.resize(f.size());
  for (Index i = 0; i < n; ++i) {
    auto& fi = f[static_cast<std::size_t>(i)];
    fi.QA = random_orthogonal(d, rng);
    fi.DA = uniform_band(d, cfg.mu_A, cfg.L_A, rng);
    fi.QC = random_orthogonal(p, rng);
    fi.DC = uniform_band(p, cfg.mu_C, cfg.L_C, rng);
    fi.U = random_orthogonal(d, rng);
    fi.V = random_orthogonal(p, rng);
    fi.S = uniform_band(k, cfg.mu_B, cfg.L_B, rng);
    Eigen::VectorXd a(d), c(p);
    for (Index j = 0; j < d; ++j) a(j) = cfg.bias_scale * rng.normal();
    for (Index j = 0; j < p; ++j) c(j) = cfg.bias_scale * rng.normal();
    g.a[static_cast<std::size_t>(i)] = std::move(a);
    g.c[static_cast<std::size_t>(i)] = std::move(c);
    if (i == 0) {
      force_endpoints(fi.DA, cfg.mu_A, cfg.L_A);
      force_endpoints(fi.DC, cfg.mu_C, cfg.L_C);
      force_endpoints(fi.S, cfg.mu_B, cfg.L_B);
    }
  }

  auto assemble = [&](double negative_scale) {
    g.A.assign(f.size(), {});
    g.B.assign(f.size(), {});
    g.C.assign(f.size(), {});
    for (std::size_t i = 0; i < f.size(); ++i) {
      Eigen::VectorXd DA = f[i].DA;
      if (cfg.negative_mu_component && static_cast<std::size_t>(*cfg.negative_mu_component) == i) {
        Index m;
        DA.minCoeff(&m);
        DA(m) = -negative_scale * DA(m);
      }
      g.A[i] = f[i].QA * DA.asDiagonal() * f[i].QA.transpose();
      g.C[i] = f[i].QC * f[i].DC.asDiagonal() * f[i].QC.transpose();
      // Symmetrize exactly; the products above are symmetric only up to rounding.
      g.A[i] = ((g.A[i] + g.A[i].transpose()) / 2.0).eval();
      g.C[i] = ((g.C[i] + g.C[i].transpose()) / 2.0).eval();
      g.B[i] = f[i].U.leftCols(k) * f[i].S.asDiagonal() * f[i].V.leftCols(k).transpose();
    }
    if (cfg.lmax_override) {
      for (std::size_t i = 0; i < f.size(); ++i) {
        const double L = matrix_constants(block_matrix(g, static_cast<Index>(i))).L;
        if (L <= 0.0) continue;
        const double target =
            static_cast<std::size_t>(cfg.lmax_override->first) == i ? cfg.lmax_override->second : 1.0;
        const double s = target / L;
        g.A[i] *= s;
        g.B[i] *= s;
        g.C[i] *= s;
      }
    }
  };

  double scale = 1.0;
  assemble(scale);
  if (cfg.negative_mu_component) {
    // Shrink the negated eigenvalue until the aggregate mu stays positive.
    for (int attempt = 0; attempt < 60; ++attempt) {
      const auto op = game_to_operator(g);
      std::vector<double> mus;
      for (Index i = 0; i < n; ++i) mus.push_back(component_constants(op, i).mu);
      if (mu_bar(mus) > 0.0) return g;
      scale /= 2.0;
      assemble(scale);
    }
    throw ValidationError("could not make one component non-monotone while keeping mu_bar > 0");
  }
  return g;
}

FiniteSumOperator<double> game_to_operator(const QuadraticGame& g) {
  std::vector<ComponentOperator<double>> comps;
  comps.reserve(static_cast<std::size_t>(g.n()));
  for (Index i = 0; i < g.n(); ++i) {
    Eigen::VectorXd b(g.d() + g.p());
    b << g.a[static_cast<std::size_t>(i)], g.c[static_cast<std::size_t>(i)];
    comps.push_back(ComponentOperator<double>::affine(block_matrix(g, i), std::move(b)));
  }
  return FiniteSumOperator<double>(std::move(comps));
}

void save_game(const QuadraticGame& g, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  nlohmann::json header = {{"format", "qgame"}, {"n", g.n()}, {"d", g.d()}, {"p", g.p()},
                           {"config", config_to_json(g.config)}};
  const std::string h = header.dump();
  os.write(kMagic, sizeof kMagic);
  write_u32(os, kVersion);
  write_u64(os, h.size());
  os.write(h.data(), static_cast<std::streamsize>(h.size()));
  for (Index i = 0; i < g.n(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    write_block(os, g.A[k]);
    write_block(os, g.B[k]);
    write_block(os, g.C[k]);
    write_block(os, g.a[k]);
    write_block(os, g.c[k]);
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

QuadraticGame load_game(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  Reader r(std::string(std::istreambuf_iterator<char>(is), {}));

  char magic[sizeof kMagic];
  r.read(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError("not a game file");
  if (const auto v = r.u32(); v != kVersion)
    throw FormatError("unsupported game file version " + std::to_string(v));
  const auto hlen = r.u64();
  if (hlen > (1u << 24)) throw FormatError("implausible header length");
  std::string h(hlen, '\0');
  r.read(h.data(), h.size());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(h);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad game header: ") + e.what());
  }

  QuadraticGame g;
  Index n, d, p;
  try {
    n = header.at("n").get<Index>();
    d = header.at("d").get<Index>();
    p = header.at("p").get<Index>();
    g.config = config_from_json(header.at("config"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad game header: ") + e.what());
  }
  if (n < 1) throw ValidationError("game file declares n = " + std::to_string(n));
  if (d < 1 || p < 1) throw ValidationError("game file declares empty player dimension");

  for (Index i = 0; i < n; ++i) {
    g.A.push_back(r.block(d, d));
    g.B.push_back(r.block(d, p));
    g.C.push_back(r.block(p, p));
    g.a.push_back(r.block(d, 1));
    g.c.push_back(r.block(p, 1));
  }
  if (!r.done()) throw FormatError("trailing bytes after game data");
  return g;
}

std::string config_json(const GameGenConfig& cfg) { return config_to_json(cfg).dump(); }

}  // namespace seg
