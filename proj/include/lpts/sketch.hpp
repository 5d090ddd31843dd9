#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "lpts/hashing.hpp"
#include "lpts/numeric.hpp"
#include "lpts/types.hpp"

namespace lpts {

/// Theory-faithful parameters vs. the fixed choices used for experiments.
enum class ParamMode { kTheory, kPractical };

inline ParamMode param_mode_from_string(const std::string& s) {
  if (s == "theory") return ParamMode::kTheory;
  if (s == "practical") return ParamMode::kPractical;
  throw std::invalid_argument("unknown mode '" + s + "' (expected theory|practical)");
}

/// Parameter presets. The theory formulas blow up fast (the repetition count
/// grows like 3 ln(6n/delta)/0.025^3); callers usually override s explicitly
/// at desk scale.
namespace presets {

inline std::uint32_t theory_r_heavy(double gamma, double eps, double p) {
  return static_cast<std::uint32_t>(std::ceil(8.0 / gamma * std::pow(12.0 / eps, p)));
}

inline std::uint32_t theory_s_heavy(std::uint64_t n, double delta) {
  return static_cast<std::uint32_t>(
      std::ceil(3.0 * std::log(6.0 * double(n) / delta) / (0.025 * 0.025 * 0.025)));
}

inline std::uint32_t theory_r_sampler(std::uint32_t k, std::uint64_t n, double eps, double p) {
  const double r = 32.0 * k * std::log(double(n)) * std::pow(72.0 / eps, p);
  return static_cast<std::uint32_t>(std::ceil(std::max(r, 120.0 * k)));
}

inline std::uint32_t theory_s_sampler(std::uint64_t n, double delta) {
  return static_cast<std::uint32_t>(
      std::ceil(3.0 * std::log(36.0 * double(n) / delta) / (0.025 * 0.025 * 0.025)));
}

inline std::uint32_t practical_r(std::uint32_t k, std::uint64_t n) {
  return static_cast<std::uint32_t>(std::ceil(k * std::max(30.0, std::log(double(n)))));
}

inline std::uint32_t practical_s(std::uint64_t n) {
  return 2 * static_cast<std::uint32_t>(std::ceil(std::max(5.0, std::log(double(n)) / 2.0)));
}

}  // namespace presets

struct SketchConfig {
  std::uint32_t n = 0;    // declared row-index universe
  std::uint32_t d = 0;    // column dimension
  std::uint32_t r = 0;    // buckets per repetition
  std::uint32_t s = 0;    // repetitions
  double p = 2.0;         // norm exponent, in [1, 2]
  double eps = 0.05;      // relative error

  void validate() const {
    if (n < 1 || d < 1 || r < 1 || s < 1) throw std::invalid_argument("sketch config: n, d, r, s must be >= 1");
    if (!(p >= 1.0 && p <= 2.0)) throw std::invalid_argument("sketch config: p must be in [1, 2]");
    // The analysis assumes eps <= 1/20; anything in (0, 1) is operable.
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("sketch config: eps must be in (0, 1)");
  }

  friend bool operator==(const SketchConfig&, const SketchConfig&) = default;
};

template <typename S>
struct HeavyEntry {
  std::uint32_t index = 0;
  RowVector<S> row;        // representative, chosen by the median-distance rule
  double norm_p = 0.0;     // |row|_p^p of the representative
  double median_v = 0.0;   // median of per-repetition norm estimates
};

/// Extraction output: perturbed heavy rows plus the percentile threshold that
/// gated them.
template <typename S>
struct HeavyList {
  std::vector<HeavyEntry<S>> entries;
  double threshold_m0 = 0.0;
};

struct ExtractOptions {
  // kTheory gates candidates at v_i >= (12/eps)^p * M0; kPractical skips the
  // gate and returns all candidates ranked by their estimates, which matches
  // the extraction stage actually run in the experiments (the gate degenerates
  // on desk-scale instances whose buckets are mostly empty).
  ParamMode mode = ParamMode::kTheory;
  bool scan_all = false;  // iterate the full declared universe instead of touched rows
};

/// s independent CountSketch repetitions over d-dimensional rows. Linear in
/// the update stream: states with identical config and seeds form a
/// commutative monoid under merge, so shards may be sketched independently
/// and summed.
template <typename S>
class SketchState {
 public:
  SketchState(SketchConfig config, SeedSet seeds)
      : config_(config), seeds_(seeds) {
    config_.validate();
    buckets_.reserve(config_.s);
    for (std::uint32_t j = 0; j < config_.s; ++j) {
      buckets_.emplace_back(Matrix<S>::Zero(config_.r, config_.d));
    }
  }

  const SketchConfig& config() const { return config_; }
  const SeedSet& seeds() const { return seeds_; }
  std::uint64_t update_count() const { return update_count_; }
  const std::unordered_set<std::uint32_t>& touched() const { return touched_; }
  const Matrix<S>& repetition(std::uint32_t j) const { return buckets_.at(j); }
  Matrix<S>& repetition(std::uint32_t j) { return buckets_.at(j); }

  /// Re-zero, optionally under new seeds; keeps allocations.
  void reset(SeedSet seeds) {
    seeds_ = seeds;
    for (auto& b : buckets_) b.setZero();
    update_count_ = 0;
    touched_.clear();
  }

  /// Single-entry update: adds sigma_{i,j} * v to column `col` of bucket
  /// h_{i,j} in every repetition.
  void add_entry(std::uint32_t i, std::uint32_t col, S v) {
    if (i >= config_.n) {
      throw std::out_of_range("update rejected: row " + std::to_string(i) + " >= n = " +
                              std::to_string(config_.n));
    }
    if (col >= config_.d) {
      throw std::out_of_range("update rejected: column " + std::to_string(col) + " >= d = " +
                              std::to_string(config_.d));
    }
    if (!std::isfinite(static_cast<double>(v))) {
      throw std::invalid_argument("update rejected: non-finite value at row " + std::to_string(i));
    }
    for (std::uint32_t j = 0; j < config_.s; ++j) {
      const std::uint32_t h = bucket_of(seeds_, i, j, config_.r);
      buckets_[j](h, col) += S(sign_of(seeds_, i, j)) * v;
    }
    touched_.insert(i);
    ++update_count_;
  }

  /// Full-row increment x for row i.
  template <typename Derived>
  void add_row(std::uint32_t i, const Eigen::MatrixBase<Derived>& x) {
    if (i >= config_.n) {
      throw std::out_of_range("update rejected: row " + std::to_string(i) + " >= n = " +
                              std::to_string(config_.n));
    }
    if (x.size() != config_.d) throw std::invalid_argument("row increment has wrong dimension");
    if (!x.allFinite()) {
      throw std::invalid_argument("update rejected: non-finite row increment at row " + std::to_string(i));
    }
    for (std::uint32_t j = 0; j < config_.s; ++j) {
      const std::uint32_t h = bucket_of(seeds_, i, j, config_.r);
      buckets_[j].row(h) += S(sign_of(seeds_, i, j)) * x;
    }
    touched_.insert(i);
    ++update_count_;
  }

  void apply(const TurnstileUpdate& u) { add_entry(u.row, u.col, S(u.value)); }

  /// Elementwise sum of bucket contents; requires identical config and seeds.
  void merge_from(const SketchState& other) {
    if (!(config_ == other.config_)) throw std::invalid_argument("merge rejected: config mismatch");
    if (!(seeds_ == other.seeds_)) throw std::invalid_argument("merge rejected: seed mismatch");
    for (std::uint32_t j = 0; j < config_.s; ++j) buckets_[j] += other.buckets_[j];
    update_count_ += other.update_count_;
    touched_.insert(other.touched_.begin(), other.touched_.end());
  }

  /// Right-multiplies every repetition by P (post-processing step; associativity
  /// gives sketch(A) * P == sketch(A * P)).
  void post_multiply(const Matrix<S>& P) {
    if (P.rows() != config_.d || P.cols() != config_.d) {
      throw std::invalid_argument("post_multiply requires a d x d matrix");
    }
    if (!P.allFinite()) throw std::invalid_argument("post_multiply requires finite entries");
    for (auto& b : buckets_) b = (b * P).eval();
  }

  /// Used by snapshot loading to rebuild bookkeeping that is not part of the
  /// bucket payload.
  void restore_counters(std::uint64_t update_count, const std::vector<std::uint32_t>& touched) {
    update_count_ = update_count;
    touched_.clear();
    touched_.insert(touched.begin(), touched.end());
  }

  /// 0.65-percentile (rank ceil(0.65 s), 1-based) of the first-bucket norms
  /// { |B_{j,1}|_p^p : j in [s] }.
  double compute_m0() const {
    std::vector<double> norms(config_.s);
    for (std::uint32_t j = 0; j < config_.s; ++j) {
      norms[j] = lp_pow_norm(buckets_[j].row(0), config_.p);
    }
    return percentile(norms, 0.65);
  }

 private:
  SketchConfig config_;
  SeedSet seeds_;
  std::vector<Matrix<S>> buckets_;
  std::uint64_t update_count_ = 0;
  std::unordered_set<std::uint32_t> touched_;
};

using SketchStated = SketchState<double>;

template <typename S>
SketchState<S> merge(const SketchState<S>& a, const SketchState<S>& b) {
  SketchState<S> out = a;
  out.merge_from(b);
  return out;
}

/// Extraction stage: per-candidate median norm estimates, the percentile
/// threshold, and representative selection.
///
/// For candidate i the estimates are a~_{i,j} = sigma_{i,j} B_{j, h_{i,j}}
/// and v_i = median_j |a~_{i,j}|_p^p. A candidate passes the theory gate when
/// v_i >= (12/eps)^p M0. The representative is the repetition j minimizing
/// median_{j'} |a~_{i,j} - a~_{i,j'}|_p^p, ties broken toward smaller j.
/// Entries are returned sorted by decreasing representative norm.
template <typename S>
HeavyList<S> extract_heavy(const SketchState<S>& state, const ExtractOptions& opts = {}) {
  const SketchConfig& cfg = state.config();
  const SeedSet& seeds = state.seeds();
  HeavyList<S> out;
  out.threshold_m0 = state.compute_m0();

  const double gate = opts.mode == ParamMode::kTheory
                          ? std::pow(12.0 / cfg.eps, cfg.p) * out.threshold_m0
                          : -std::numeric_limits<double>::infinity();

  std::vector<std::uint32_t> candidates;
  if (opts.scan_all) {
    candidates.resize(cfg.n);
    for (std::uint32_t i = 0; i < cfg.n; ++i) candidates[i] = i;
  } else {
    candidates.assign(state.touched().begin(), state.touched().end());
    std::sort(candidates.begin(), candidates.end());
  }

  // Scratch reused across candidates.
  std::vector<std::uint32_t> h(cfg.s);
  std::vector<double> sg(cfg.s);
  std::vector<double> norms(cfg.s);
  std::vector<double> scratch(cfg.s);
  Matrix<S> reps(cfg.s, cfg.d);
  Matrix<double> dist(cfg.s, cfg.s);

  for (std::uint32_t i : candidates) {
    for (std::uint32_t j = 0; j < cfg.s; ++j) {
      h[j] = bucket_of(seeds, i, j, cfg.r);
      sg[j] = double(sign_of(seeds, i, j));
      norms[j] = lp_pow_norm(state.repetition(j).row(h[j]), cfg.p);
    }
    scratch = norms;
    const double v_i = lower_median(scratch);
    if (v_i < gate) continue;

    for (std::uint32_t j = 0; j < cfg.s; ++j) {
      reps.row(j) = S(sg[j]) * state.repetition(j).row(h[j]);
    }
    dist.diagonal().setZero();
    for (std::uint32_t j = 0; j < cfg.s; ++j) {
      for (std::uint32_t j2 = j + 1; j2 < cfg.s; ++j2) {
        const double dd = lp_pow_dist(reps.row(j), reps.row(j2), cfg.p);
        dist(j, j2) = dd;
        dist(j2, j) = dd;
      }
    }
    std::uint32_t best_j = 0;
    double best_med = std::numeric_limits<double>::infinity();
    for (std::uint32_t j = 0; j < cfg.s; ++j) {
      for (std::uint32_t j2 = 0; j2 < cfg.s; ++j2) scratch[j2] = dist(j, j2);
      const double med = lower_median(scratch);
      if (med < best_med) {  // strict: ties keep the smallest j
        best_med = med;
        best_j = j;
      }
    }

    HeavyEntry<S> entry;
    entry.index = i;
    entry.row = reps.row(best_j);
    entry.norm_p = lp_pow_norm(entry.row, cfg.p);
    entry.median_v = v_i;
    out.entries.push_back(std::move(entry));
  }

  std::sort(out.entries.begin(), out.entries.end(), [](const auto& a, const auto& b) {
    if (a.norm_p != b.norm_p) return a.norm_p > b.norm_p;
    return a.index < b.index;
  });
  return out;
}

namespace snapshot {

inline constexpr char kMagic[5] = {'L', 'P', 'T', 'S', '1'};
inline constexpr std::uint8_t kVersion = 1;

// Layout (little-endian):
//   magic "LPTS1", u8 version, u8[2] reserved,
//   u32 n, d, r, s; f64 p, eps; u64 master_seed; u32 instance_tag;
//   u64 update_count;
//   s*r*d f64 bucket payload in (repetition, bucket, column) order;
//   u64 touched_count, touched_count * u32 sorted touched row indices.

inline void save(const SketchState<double>& state, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open snapshot for writing: " + path);
  const SketchConfig& c = state.config();
  auto put = [&](const void* ptr, std::size_t bytes) {
    if (std::fwrite(ptr, 1, bytes, f) != bytes) {
      std::fclose(f);
      throw std::runtime_error("short write on snapshot: " + path);
    }
  };
  put(kMagic, 5);
  put(&kVersion, 1);
  const std::uint8_t reserved[2] = {0, 0};
  put(reserved, 2);
  put(&c.n, 4);
  put(&c.d, 4);
  put(&c.r, 4);
  put(&c.s, 4);
  put(&c.p, 8);
  put(&c.eps, 8);
  const std::uint64_t master = state.seeds().master_seed;
  const std::uint32_t tag = state.seeds().instance_tag;
  put(&master, 8);
  put(&tag, 4);
  const std::uint64_t count = state.update_count();
  put(&count, 8);
  std::vector<double> rowbuf(c.d);
  for (std::uint32_t j = 0; j < c.s; ++j) {
    const auto& b = state.repetition(j);
    for (std::uint32_t q = 0; q < c.r; ++q) {
      for (std::uint32_t col = 0; col < c.d; ++col) rowbuf[col] = b(q, col);
      put(rowbuf.data(), sizeof(double) * c.d);
    }
  }
  std::vector<std::uint32_t> touched(state.touched().begin(), state.touched().end());
  std::sort(touched.begin(), touched.end());
  const std::uint64_t tcount = touched.size();
  put(&tcount, 8);
  if (tcount > 0) put(touched.data(), 4 * touched.size());
  std::fclose(f);
}

inline SketchState<double> load(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open snapshot: " + path);
  auto get = [&](void* ptr, std::size_t bytes) {
    if (std::fread(ptr, 1, bytes, f) != bytes) {
      std::fclose(f);
      throw std::runtime_error("truncated snapshot: " + path);
    }
  };
  char magic[5];
  get(magic, 5);
  if (std::memcmp(magic, kMagic, 5) != 0) {
    std::fclose(f);
    throw std::runtime_error("bad snapshot magic in " + path);
  }
  std::uint8_t version;
  get(&version, 1);
  if (version != kVersion) {
    std::fclose(f);
    throw std::runtime_error("unsupported snapshot version in " + path);
  }
  std::uint8_t reserved[2];
  get(reserved, 2);
  SketchConfig c;
  get(&c.n, 4);
  get(&c.d, 4);
  get(&c.r, 4);
  get(&c.s, 4);
  get(&c.p, 8);
  get(&c.eps, 8);
  std::uint64_t master;
  std::uint32_t tag;
  get(&master, 8);
  get(&tag, 4);
  std::uint64_t count;
  get(&count, 8);

  SketchState<double> state(c, SeedSet{master, tag});
  std::vector<double> rowbuf(c.d);
  for (std::uint32_t j = 0; j < c.s; ++j) {
    auto& b = state.repetition(j);
    for (std::uint32_t q = 0; q < c.r; ++q) {
      get(rowbuf.data(), sizeof(double) * c.d);
      for (std::uint32_t col = 0; col < c.d; ++col) b(q, col) = rowbuf[col];
    }
  }
  std::uint64_t tcount;
  get(&tcount, 8);
  std::vector<std::uint32_t> touched(tcount);
  if (tcount > 0) get(touched.data(), 4 * tcount);
  std::fclose(f);
  state.restore_counters(count, touched);
  return state;
}

}  // namespace snapshot

}  // namespace lpts
