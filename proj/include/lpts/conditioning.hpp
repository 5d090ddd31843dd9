#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/LU>
#include <Eigen/QR>
#include <Eigen/SVD>

#include "lpts/hashing.hpp"
#include "lpts/numeric.hpp"
#include "lpts/sketch.hpp"
#include "lpts/types.hpp"

namespace lpts {

/// Standard symmetric p-stable draw (Chambers-Mallows-Stuck) from two
/// uniforms on (0, 1). p = 1 is Cauchy, p = 2 is N(0, 2).
inline double p_stable_draw(double p, double u1, double u2) {
  const double theta = std::numbers::pi * (u1 - 0.5);
  const double w = -std::log(u2);
  if (p == 1.0) return std::tan(theta);
  if (p == 2.0) return 2.0 * std::sin(theta) * std::sqrt(w);
  const double a = std::sin(p * theta) / std::pow(std::cos(theta), 1.0 / p);
  const double b = std::pow(std::cos((1.0 - p) * theta) / w, (1.0 - p) / p);
  return a * b;
}

/// Median of |X| for standard p-stable X, estimated once from 10^6 draws and
/// cached per exponent; used to center the embedding distortion.
inline double stable_median_abs(double p) {
  static std::map<double, double> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(p);
  if (it != cache.end()) return it->second;
  std::mt19937_64 gen(0x5eedC0FFEEull);
  std::uniform_real_distribution<double> unif(std::numeric_limits<double>::min(), 1.0);
  const std::size_t trials = 1'000'000;
  std::vector<double> draws(trials);
  for (auto& x : draws) x = std::abs(p_stable_draw(p, unif(gen), unif(gen)));
  const double med = lower_median(draws);
  cache.emplace(p, med);
  return med;
}

enum class EmbeddingKind { kDensePStable, kCountSketchL2 };

struct EmbeddingConfig {
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  double p = 2.0;
  EmbeddingKind kind = EmbeddingKind::kCountSketchL2;
  std::uint32_t rows = 0;  // 0 derives the default for the kind

  static EmbeddingConfig make(std::uint32_t n, std::uint32_t d, double p,
                              std::uint32_t rows = 0) {
    EmbeddingConfig c;
    c.n = n;
    c.d = d;
    c.p = p;
    c.kind = p == 2.0 ? EmbeddingKind::kCountSketchL2 : EmbeddingKind::kDensePStable;
    c.rows = rows != 0 ? rows : default_rows(d, c.kind);
    return c;
  }

  static std::uint32_t default_rows(std::uint32_t d, EmbeddingKind kind) {
    if (kind == EmbeddingKind::kCountSketchL2) return 8 * d * d;
    return static_cast<std::uint32_t>(std::ceil(10.0 * d * std::max(1.0, std::log(double(d)))));
  }

  void validate() const {
    if (n < 1 || d < 1 || rows < 1) throw std::invalid_argument("embedding config: n, d, rows must be >= 1");
    if (!(p >= 1.0 && p <= 2.0)) throw std::invalid_argument("embedding config: p must be in [1, 2]");
    if (kind == EmbeddingKind::kCountSketchL2 && p != 2.0) {
      throw std::invalid_argument("countsketch-l2 embedding requires p = 2");
    }
  }

  friend bool operator==(const EmbeddingConfig&, const EmbeddingConfig&) = default;
};

/// Linear accumulator for Pi * A where Pi is an oblivious subspace-embedding
/// matrix regenerated on demand from seeds (columns are never stored).
template <typename S>
class EmbeddingSketch {
 public:
  EmbeddingSketch(EmbeddingConfig config, SeedSet seeds)
      : config_(config), seeds_(seeds), acc_(Matrix<S>::Zero(config.rows, config.d)) {
    config_.validate();
    if (config_.kind == EmbeddingKind::kDensePStable) {
      scale_ = 1.0 / (stable_median_abs(config_.p) * std::pow(double(config_.rows), 1.0 / config_.p));
    }
  }

  const EmbeddingConfig& config() const { return config_; }
  const SeedSet& seeds() const { return seeds_; }
  const Matrix<S>& matrix() const { return acc_; }
  std::uint64_t update_count() const { return update_count_; }

  void add_entry(std::uint32_t i, std::uint32_t col, double v) {
    if (i >= config_.n || col >= config_.d) {
      throw std::out_of_range("embedding update rejected: index out of range");
    }
    if (!std::isfinite(v)) throw std::invalid_argument("embedding update rejected: non-finite value");
    if (config_.kind == EmbeddingKind::kCountSketchL2) {
      const std::uint32_t h = bucket_of(seeds_, i, 0, config_.rows);
      acc_(h, col) += S(sign_of(seeds_, i, 0)) * S(v);
    } else {
      for (std::uint32_t l = 0; l < config_.rows; ++l) {
        acc_(l, col) += S(v * pi_entry(i, l));
      }
    }
    ++update_count_;
  }

  void apply(const TurnstileUpdate& u) { add_entry(u.row, u.col, u.value); }

  void merge_from(const EmbeddingSketch& other) {
    if (!(config_ == other.config_) || !(seeds_ == other.seeds_)) {
      throw std::invalid_argument("embedding merge rejected: config or seed mismatch");
    }
    acc_ += other.acc_;
    update_count_ += other.update_count_;
  }

  /// Entry Pi_{l,i}, regenerated from seeds.
  double pi_entry(std::uint32_t i, std::uint32_t l) const {
    const double u1 = uniform_at(i, 2 * l + 1);
    const double u2 = uniform_at(i, 2 * l + 2);
    return scale_ * p_stable_draw(config_.p, u1, u2);
  }

 private:
  double uniform_at(std::uint32_t i, std::uint32_t j) const {
    const std::uint64_t h = detail::keyed_hash(seeds_, detail::Purpose::kScale, i, j);
    return (static_cast<double>(h >> 12) + 0.5) * 0x1.0p-52;
  }

  EmbeddingConfig config_;
  SeedSet seeds_;
  Matrix<S> acc_;
  double scale_ = 1.0;
  std::uint64_t update_count_ = 0;
};

using EmbeddingSketchd = EmbeddingSketch<double>;

/// Upper-triangular R (positive diagonal) from the QR decomposition of the
/// embedded matrix, together with its inverse. P = R^{-1} turns row-norm
/// sampling into leverage-score sampling.
template <typename S>
struct Conditioner {
  Matrix<S> R;
  Matrix<S> R_inv;
  double alpha_emp = 0.0;  // |Q~|_p of the embedded basis
  double beta_emp = 0.0;   // sampled lower bound on beta; see beta_sampled()
  double p = 2.0;
  SeedSet seeds;
};

using Conditionerd = Conditioner<double>;

/// |U|_p = (sum |U_ij|^p)^(1/p).
template <typename S>
double alpha_measure(const Matrix<S>& U, double p) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < U.rows(); ++i) sum += lp_pow_norm(U.row(i), p);
  return std::pow(sum, 1.0 / p);
}

/// max over sampled directions z of |z|_q / |U z|_p with q the dual norm.
/// Directions: all +-e_j, Gaussian unit vectors, and the right singular
/// vector of the smallest singular value. A sampled maximum can only
/// under-estimate the true beta; callers needing a certified constant use
/// beta_certified_* below.
template <typename S>
double beta_sampled(const Matrix<S>& U, double p, std::size_t samples = 10'000,
                    std::uint64_t seed = 42) {
  const double q = p == 1.0 ? std::numeric_limits<double>::infinity() : p / (p - 1.0);
  const Eigen::Index d = U.cols();
  auto ratio = [&](const Vector<S>& z) {
    const double denom = std::pow(lp_pow_norm(U * z, p), 1.0 / p);
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    const double num = std::isinf(q) ? z.template lpNorm<Eigen::Infinity>()
                                     : std::pow(lp_pow_norm(z, q), 1.0 / q);
    return num / denom;
  };
  double best = 0.0;
  Vector<S> z = Vector<S>::Zero(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    z.setZero();
    z(j) = S(1);
    best = std::max(best, ratio(z));
  }
  Eigen::JacobiSVD<Matrix<S>> svd(U, Eigen::ComputeThinV);
  z = svd.matrixV().col(d - 1);
  best = std::max(best, ratio(z));
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  for (std::size_t it = 0; it < samples; ++it) {
    for (Eigen::Index j = 0; j < d; ++j) z(j) = S(normal(gen));
    best = std::max(best, ratio(z));
  }
  return best;
}

/// Exact beta for p = 2: 1 / sigma_min(U).
template <typename S>
double beta_certified_l2(const Matrix<S>& U) {
  Eigen::JacobiSVD<Matrix<S>> svd(U);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (smin <= 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / smin;
}

/// Exact beta for p = 1: 1 / min{ |U z|_1 : |z|_inf = 1 }, by enumerating the
/// basic solutions of the piecewise-linear minimization over the box faces.
/// Cost grows as C(n + d, d-1); intended for small instances.
template <typename S>
double beta_certified_l1(const Matrix<S>& U) {
  const Eigen::Index n = U.rows();
  const Eigen::Index d = U.cols();
  if (d == 1) {
    const double v = U.col(0).cwiseAbs().sum();
    return v > 0 ? 1.0 / v : std::numeric_limits<double>::infinity();
  }
  // Constraint set: rows u_l z = 0 (ids [0, n)), faces z_m = +-1 (ids n + m).
  const Eigen::Index m_total = n + (d);
  std::vector<Eigen::Index> comb(static_cast<std::size_t>(d - 1));
  double best = std::numeric_limits<double>::infinity();
  Matrix<S> A(d, d);
  Vector<S> b(d);

  for (Eigen::Index face = 0; face < d; ++face) {
    // Fix z_face = 1 (sign symmetry makes -1 redundant), pick d-1 further
    // active constraints, enumerate face signs.
    std::function<void(Eigen::Index, Eigen::Index)> rec = [&](Eigen::Index start, Eigen::Index depth) {
      if (depth == d - 1) {
        Eigen::Index nsigns = 0;
        for (Eigen::Index t = 0; t < d - 1; ++t)
          if (comb[t] >= n) ++nsigns;
        for (int mask = 0; mask < (1 << nsigns); ++mask) {
          A.row(0).setZero();
          A(0, face) = S(1);
          b(0) = S(1);
          Eigen::Index sbit = 0;
          for (Eigen::Index t = 0; t < d - 1; ++t) {
            if (comb[t] < n) {
              A.row(t + 1) = U.row(comb[t]);
              b(t + 1) = S(0);
            } else {
              const Eigen::Index coord = comb[t] - n;
              A.row(t + 1).setZero();
              A(t + 1, coord) = S(1);
              b(t + 1) = S((mask >> sbit) & 1 ? -1 : 1);
              ++sbit;
            }
          }
          Eigen::FullPivLU<Matrix<S>> lu(A);
          if (!lu.isInvertible()) continue;
          Vector<S> z = lu.solve(b);
          if (z.template lpNorm<Eigen::Infinity>() > 1.0 + 1e-9) continue;
          const double val = (U * z).template lpNorm<1>();
          best = std::min(best, val);
        }
        return;
      }
      for (Eigen::Index c = start; c < m_total; ++c) {
        if (c >= n && c - n == face) continue;  // z_face already pinned
        comb[static_cast<std::size_t>(depth)] = c;
        rec(c + 1, depth + 1);
      }
    };
    rec(0, 0);
  }
  if (!(best > 0.0) || !std::isfinite(best)) return std::numeric_limits<double>::infinity();
  return 1.0 / best;
}

/// Householder QR of the embedded matrix; R has a positive diagonal.
/// Throws when the embedding is rank deficient.
template <typename S>
Conditioner<S> finalize_conditioner(const EmbeddingSketch<S>& sketch) {
  const Matrix<S>& E = sketch.matrix();
  if (!E.allFinite()) throw std::invalid_argument("embedded matrix has non-finite entries");
  const Eigen::Index d = E.cols();
  if (E.rows() < d) throw std::invalid_argument("embedding has fewer rows than columns");

  Eigen::HouseholderQR<Matrix<S>> qr(E);
  Matrix<S> R = qr.matrixQR().topRows(d).template triangularView<Eigen::Upper>();
  const double norm_scale = R.cwiseAbs().maxCoeff();
  Eigen::Index deficient = 0;
  for (Eigen::Index j = 0; j < d; ++j) {
    if (std::abs(double(R(j, j))) <= 1e-12 * norm_scale) ++deficient;
  }
  if (deficient > 0) {
    throw std::runtime_error("rank-deficient embedding: " + std::to_string(deficient) +
                             " of " + std::to_string(d) + " columns are dependent");
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    if (R(j, j) < S(0)) R.row(j) = -R.row(j);
  }

  Conditioner<S> cond;
  cond.R = R;
  cond.R_inv = R.template triangularView<Eigen::Upper>().solve(Matrix<S>::Identity(d, d));
  cond.p = sketch.config().p;
  cond.seeds = sketch.seeds();
  const Matrix<S> Q = E * cond.R_inv;
  cond.alpha_emp = alpha_measure(Q, cond.p);
  cond.beta_emp = beta_sampled(Q, cond.p);
  return cond;
}

/// Per-row upper bounds beta^p |a_i R^{-1}|_p^p on the lp leverage scores of
/// the given rows. The constant is certified against the supplied rows where
/// an exact computation is tractable (p = 2 always; p = 1 for small
/// instances), otherwise the sampled estimate is used.
template <typename S>
Vectord leverage_bounds(const Conditioner<S>& cond, const Matrix<S>& rows) {
  if (!rows.allFinite()) throw std::invalid_argument("leverage_bounds requires finite rows");
  const Matrix<S> U = rows * cond.R_inv;
  double beta = cond.beta_emp;
  if (cond.p == 2.0) {
    beta = std::max(beta, beta_certified_l2(U));
  } else if (cond.p == 1.0 && rows.rows() <= 64 && rows.cols() <= 6) {
    beta = std::max(beta, beta_certified_l1(U));
  } else {
    beta = std::max(beta, beta_sampled(U, cond.p));
  }
  const double betap = std::pow(beta, cond.p);
  Vectord out(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) out(i) = betap * lp_pow_norm(U.row(i), cond.p);
  return out;
}

/// CSV dump: seed metadata comments, then R and R_inv.
template <typename S>
void save_conditioner(const Conditioner<S>& cond, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open conditioner file for writing: " + path);
  const Eigen::Index d = cond.R.rows();
  f.precision(17);
  f << "# lpts conditioner v1\n";
  f << "# d=" << d << " p=" << cond.p << " master_seed=" << cond.seeds.master_seed
    << " instance_tag=" << cond.seeds.instance_tag << " alpha_emp=" << cond.alpha_emp
    << " beta_emp=" << cond.beta_emp << "\n";
  auto dump = [&](const Matrix<S>& M) {
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
      for (Eigen::Index j = 0; j < M.cols(); ++j) f << (j ? "," : "") << double(M(i, j));
      f << "\n";
    }
  };
  dump(cond.R);
  dump(cond.R_inv);
}

template <typename S>
Conditioner<S> load_conditioner(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open conditioner file: " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("# lpts conditioner", 0) != 0) {
    throw std::runtime_error("not a conditioner file: " + path);
  }
  Conditioner<S> cond;
  Eigen::Index d = 0;
  if (!std::getline(f, line)) throw std::runtime_error("truncated conditioner file: " + path);
  {
    long long dd = 0;
    unsigned long long seed = 0;
    unsigned tag = 0;
    if (std::sscanf(line.c_str(), "# d=%lld p=%lf master_seed=%llu instance_tag=%u alpha_emp=%lf beta_emp=%lf",
                    &dd, &cond.p, &seed, &tag, &cond.alpha_emp, &cond.beta_emp) != 6) {
      throw std::runtime_error("bad conditioner metadata in: " + path);
    }
    d = static_cast<Eigen::Index>(dd);
    cond.seeds = SeedSet{seed, tag};
  }
  auto read_matrix = [&](Matrix<S>& M) {
    M.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (!std::getline(f, line)) throw std::runtime_error("truncated conditioner file: " + path);
      std::size_t pos = 0;
      for (Eigen::Index j = 0; j < d; ++j) {
        std::size_t used = 0;
        M(i, j) = S(std::stod(line.substr(pos), &used));
        pos += used;
        if (j + 1 < d) pos = line.find(',', pos) + 1;
      }
    }
  };
  read_matrix(cond.R);
  read_matrix(cond.R_inv);
  return cond;
}

}  // namespace lpts
