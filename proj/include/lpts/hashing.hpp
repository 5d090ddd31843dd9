#pragma once

#include <cstdint>

namespace lpts {

/// Identifies one independent stream of per-row randomness. All bucket
/// assignments, signs and scaling factors are pure functions of
/// (master_seed, instance_tag, row, repetition), so any two partitions of a
/// stream see identical randomness and sketches stay mergeable.
struct SeedSet {
  std::uint64_t master_seed = 0;
  std::uint32_t instance_tag = 0;

  SeedSet with_tag(std::uint32_t tag) const { return SeedSet{master_seed, tag}; }

  friend bool operator==(const SeedSet&, const SeedSet&) = default;
};

/// Instance-tag layout used by the higher-level modules. A sampler occupies a
/// block of eight consecutive tags starting at its base tag; independent
/// sampler instances (e.g. the p- and 1-norm samplers of a probit coreset)
/// use disjoint blocks.
namespace tags {
inline constexpr std::uint32_t kSketch = 0;       // h, sigma of copy 1
inline constexpr std::uint32_t kScale = 1;        // t of copy 1
inline constexpr std::uint32_t kSketchCopy2 = 2;  // h, sigma of copy 2
inline constexpr std::uint32_t kScaleCopy2 = 3;   // t of copy 2
inline constexpr std::uint32_t kUniform = 4;      // uniform-component membership
inline constexpr std::uint32_t kEmbedding = 5;    // subspace-embedding sketch
inline constexpr std::uint32_t kBlock = 8;        // tags per sampler instance
}  // namespace tags

namespace detail {

// splitmix64 finalizer; full-avalanche 64-bit mixer.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

enum class Purpose : std::uint64_t { kBucket = 1, kSign = 2, kScale = 3 };

// Chained mixing instead of a single xor of all arguments, so that no linear
// combination of (tag, i, j) collapses the key.
inline std::uint64_t keyed_hash(const SeedSet& seeds, Purpose purpose, std::uint64_t i,
                                std::uint64_t j) {
  std::uint64_t x = mix64(seeds.master_seed + kGolden * (std::uint64_t(seeds.instance_tag) + 1));
  x = mix64(x ^ (static_cast<std::uint64_t>(purpose) << 56) ^ i);
  x = mix64(x ^ (j + kGolden));
  return x;
}

}  // namespace detail

/// Bucket index h_{i,j} in [0, r), uniform per (row, repetition).
inline std::uint32_t bucket_of(const SeedSet& seeds, std::uint32_t i, std::uint32_t j,
                               std::uint32_t r) {
  const std::uint64_t h = detail::keyed_hash(seeds, detail::Purpose::kBucket, i, j);
  // multiply-shift range reduction; bias is O(r / 2^64)
  return static_cast<std::uint32_t>((static_cast<unsigned __int128>(h) * r) >> 64);
}

/// Sign sigma_{i,j} in {-1, +1}, uniform per (row, repetition).
inline int sign_of(const SeedSet& seeds, std::uint32_t i, std::uint32_t j) {
  const std::uint64_t h = detail::keyed_hash(seeds, detail::Purpose::kSign, i, j);
  return (h >> 63) ? +1 : -1;
}

/// Scaling factor t_i, uniform on the open interval (0, 1). The top 52 hash
/// bits are mapped to the midpoint grid ((m + 1/2) * 2^-52), which keeps the
/// value strictly inside (0, 1) in double precision; the literal
/// (hash+1)/(2^64+1) mapping rounds to exactly 1.0 for the largest hashes.
inline double scale_of(const SeedSet& seeds, std::uint32_t i) {
  const std::uint64_t h = detail::keyed_hash(seeds, detail::Purpose::kScale, i, 0);
  return (static_cast<double>(h >> 12) + 0.5) * 0x1.0p-52;
}

}  // namespace lpts
