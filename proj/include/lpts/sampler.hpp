#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "lpts/hashing.hpp"
#include "lpts/sketch.hpp"
#include "lpts/types.hpp"

namespace lpts {

/// Modified mode runs two independent sketch copies so the threshold alpha is
/// independent of the drawn sample; plain mode uses a single copy and returns
/// exactly the top-k rows.
enum class SamplerMode { kPlain, kModified };

struct SamplerConfig {
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  std::uint32_t k = 1;
  double p = 2.0;
  double eps = 0.05;
  double delta = 0.05;  // used by theory presets only
  SamplerMode mode = SamplerMode::kModified;
  ParamMode params = ParamMode::kPractical;
  std::uint32_t r = 0;  // 0 derives from the preset for `params`
  std::uint32_t s = 0;

  SketchConfig sketch_config() const {
    SketchConfig c;
    c.n = n;
    c.d = d;
    c.p = p;
    c.eps = eps;
    c.r = r != 0 ? r
                 : (params == ParamMode::kTheory ? presets::theory_r_sampler(k, n, eps, p)
                                                 : presets::practical_r(k, n));
    c.s = s != 0 ? s
                 : (params == ParamMode::kTheory ? presets::theory_s_sampler(n, delta)
                                                 : presets::practical_s(n));
    if (k < 1) throw std::invalid_argument("sampler config: k must be >= 1");
    c.validate();
    return c;
  }
};

template <typename S>
struct SampleEntry {
  std::uint32_t index = 0;
  RowVector<S> row;             // recovered row, de-scaled and de-conditioned
  double weight = 1.0;          // 1 / min{1, norm_p / alpha}
  double prob_estimate = 1.0;   // min{1, norm_p / alpha}
  double norm_p = 0.0;          // |a~_i|_p^p before de-conditioning
};

template <typename S>
struct WeightedSample {
  std::vector<SampleEntry<S>> entries;
  double alpha = 0.0;
};

using WeightedSampled = WeightedSample<double>;

/// Value v forwarded with the row's random rescaling applied: v * t^(-1/p).
inline double scaled_value(double t, double p, double v) { return v * std::pow(t, -1.0 / p); }

inline double scaled_value(const SeedSet& scale_seeds, std::uint32_t i, double p, double v) {
  return scaled_value(scale_of(scale_seeds, i), p, v);
}

/// alpha = rank-th largest recovered norm in L (entries sorted descending).
/// Plain mode passes rank = k, modified mode rank = ceil(1.5 k).
template <typename S>
double select_alpha(const HeavyList<S>& list, std::uint32_t rank) {
  if (list.entries.size() < rank) {
    throw std::runtime_error("insufficient heavy hitters: |L| = " +
                             std::to_string(list.entries.size()) + " < " + std::to_string(rank) +
                             "; increase r or s, or reduce k");
  }
  return list.entries[rank - 1].norm_p;
}

/// Streaming two-copy row sampler: updates are rescaled by t_i^(-1/p) per
/// copy, sketched, and at the end the heavy rows of copy 2 that clear the
/// copy-1 threshold alpha are returned with weights that approximate inverse
/// inclusion probabilities.
template <typename S>
class LpSampler {
 public:
  /// `base` supplies the master seed and the base instance tag; the sampler
  /// consumes the tag block [base, base + 4) per the layout in hashing.hpp.
  LpSampler(SamplerConfig config, SeedSet base)
      : config_(config),
        sketch1_(config.sketch_config(), base.with_tag(base.instance_tag + tags::kSketch)),
        scale1_(base.with_tag(base.instance_tag + tags::kScale)),
        sketch2_(config.sketch_config(), base.with_tag(base.instance_tag + tags::kSketchCopy2)),
        scale2_(base.with_tag(base.instance_tag + tags::kScaleCopy2)) {}

  const SamplerConfig& config() const { return config_; }
  SketchState<S>& copy1() { return sketch1_; }
  SketchState<S>& copy2() { return sketch2_; }

  void add_entry(std::uint32_t i, std::uint32_t col, double v) {
    sketch1_.add_entry(i, col, S(scaled_value(scale1_, i, config_.p, v)));
    if (config_.mode == SamplerMode::kModified) {
      sketch2_.add_entry(i, col, S(scaled_value(scale2_, i, config_.p, v)));
    }
  }

  void apply(const TurnstileUpdate& u) { add_entry(u.row, u.col, u.value); }

  /// Runs extraction and sampling. If a conditioner P is supplied, both
  /// sketches are post-multiplied by P before extraction and the returned
  /// rows are mapped back through P_inv; P must be invertible.
  WeightedSample<S> finalize(const Matrix<S>* P = nullptr, const Matrix<S>* P_inv = nullptr) {
    if ((P == nullptr) != (P_inv == nullptr)) {
      throw std::invalid_argument("conditioner requires both P and P_inv");
    }
    if (P != nullptr) {
      if (!P->allFinite() || !P_inv->allFinite()) {
        throw std::invalid_argument("conditioner must have finite entries");
      }
      sketch1_.post_multiply(*P);
      if (config_.mode == SamplerMode::kModified) sketch2_.post_multiply(*P);
    }

    ExtractOptions opts;
    opts.mode = config_.params;
    HeavyList<S> list1 = extract_heavy(sketch1_, opts);
    heavy1_size_ = list1.entries.size();
    m0_copy1_ = list1.threshold_m0;

    WeightedSample<S> out;
    if (config_.mode == SamplerMode::kPlain) {
      out.alpha = select_alpha(list1, config_.k);
      for (std::uint32_t idx = 0; idx < config_.k; ++idx) {
        out.entries.push_back(make_entry(list1.entries[idx], scale1_, out.alpha, P_inv));
      }
      return out;
    }

    const auto rank = static_cast<std::uint32_t>(std::ceil(1.5 * config_.k));
    out.alpha = select_alpha(list1, rank);

    HeavyList<S> list2 = extract_heavy(sketch2_, opts);
    heavy2_size_ = list2.entries.size();
    for (const auto& e : list2.entries) {
      if (e.norm_p < out.alpha) break;  // sorted descending
      out.entries.push_back(make_entry(e, scale2_, out.alpha, P_inv));
    }
    return out;
  }

  // Diagnostics populated by finalize().
  std::size_t heavy1_size() const { return heavy1_size_; }
  std::size_t heavy2_size() const { return heavy2_size_; }
  double m0_copy1() const { return m0_copy1_; }

 private:
  SampleEntry<S> make_entry(const HeavyEntry<S>& e, const SeedSet& scale_seeds, double alpha,
                            const Matrix<S>* P_inv) const {
    const double t = scale_of(scale_seeds, e.index);
    const double factor = std::pow(t, -1.0 / config_.p);
    SampleEntry<S> entry;
    entry.index = e.index;
    entry.row = e.row / S(factor);  // identical t as at update time
    entry.norm_p = lp_pow_norm(entry.row, config_.p);
    entry.prob_estimate = std::min(1.0, entry.norm_p / alpha);
    entry.weight = 1.0 / entry.prob_estimate;
    if (P_inv != nullptr) entry.row = (entry.row * (*P_inv)).eval();
    return entry;
  }

  SamplerConfig config_;
  SketchState<S> sketch1_;
  SeedSet scale1_;
  SketchState<S> sketch2_;
  SeedSet scale2_;
  std::size_t heavy1_size_ = 0;
  std::size_t heavy2_size_ = 0;
  double m0_copy1_ = 0.0;
};

using LpSamplerd = LpSampler<double>;

/// Sum of w_i |a~_i|_p^p; a (1 +- eps) estimate of |A P|_p^p.
template <typename S>
double estimate_total_norm(const WeightedSample<S>& sample) {
  if (sample.entries.empty()) throw std::invalid_argument("estimate over empty sample");
  double sum = 0.0;
  for (const auto& e : sample.entries) sum += e.weight * e.norm_p;
  return sum;
}

/// Union of two independently drawn samples. A duplicate index keeps the
/// first sample's row; combined inclusion probability p + p' - p p', weight
/// its reciprocal clipped to >= 1.
template <typename S>
WeightedSample<S> union_mixture(const WeightedSample<S>& s1, const WeightedSample<S>& s2) {
  WeightedSample<S> out;
  out.alpha = s1.alpha;
  std::unordered_map<std::uint32_t, std::size_t> at;
  for (const auto& e : s1.entries) {
    at.emplace(e.index, out.entries.size());
    out.entries.push_back(e);
  }
  for (const auto& e : s2.entries) {
    auto it = at.find(e.index);
    if (it == at.end()) {
      at.emplace(e.index, out.entries.size());
      out.entries.push_back(e);
    } else {
      auto& kept = out.entries[it->second];
      const double combined = kept.prob_estimate + e.prob_estimate - kept.prob_estimate * e.prob_estimate;
      kept.prob_estimate = combined;
      kept.weight = std::max(1.0, 1.0 / combined);
    }
  }
  for (auto& e : out.entries) {
    e.weight = std::max(1.0, 1.0 / e.prob_estimate);
  }
  return out;
}

/// Uniform component: rows with t_i < rate (dedicated instance tag) bypass
/// the sketch and are accumulated exactly, so the mixture has original rows
/// available at O(rate n d) memory.
template <typename S>
class UniformSampler {
 public:
  UniformSampler(std::uint32_t n, std::uint32_t d, double rate, double p, SeedSet seeds)
      : n_(n), d_(d), rate_(rate), p_(p), seeds_(seeds) {
    if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("uniform rate must be in (0, 1]");
  }

  bool selected(std::uint32_t i) const { return rate_ >= 1.0 || scale_of(seeds_, i) < rate_; }

  void add_entry(std::uint32_t i, std::uint32_t col, double v) {
    if (i >= n_ || col >= d_) throw std::out_of_range("uniform sampler: index out of range");
    if (!selected(i)) return;
    auto [it, inserted] = rows_.try_emplace(i, RowVector<S>::Zero(d_));
    it->second(col) += S(v);
  }

  void apply(const TurnstileUpdate& u) { add_entry(u.row, u.col, u.value); }

  WeightedSample<S> sample() const {
    WeightedSample<S> out;
    std::vector<std::uint32_t> idx;
    idx.reserve(rows_.size());
    for (const auto& [i, _] : rows_) idx.push_back(i);
    std::sort(idx.begin(), idx.end());
    for (std::uint32_t i : idx) {
      SampleEntry<S> e;
      e.index = i;
      e.row = rows_.at(i);
      e.prob_estimate = rate_;
      e.weight = 1.0 / rate_;
      e.norm_p = lp_pow_norm(e.row, p_);
      out.entries.push_back(std::move(e));
    }
    return out;
  }

 private:
  std::uint32_t n_;
  std::uint32_t d_;
  double rate_;
  double p_;
  SeedSet seeds_;
  std::unordered_map<std::uint32_t, RowVector<S>> rows_;
};

using UniformSamplerd = UniformSampler<double>;

}  // namespace lpts
