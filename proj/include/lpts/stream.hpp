#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lpts/losses.hpp"
#include "lpts/numeric.hpp"
#include "lpts/types.hpp"

namespace lpts {

/// In-memory stream: header plus updates in arrival order.
struct Stream {
  StreamHeader header;
  std::vector<TurnstileUpdate> updates;

  /// Dense replay of all updates; the ground-truth matrix behind the stream.
  Matrixd materialize() const {
    Matrixd A = Matrixd::Zero(header.n, header.d);
    for (const auto& u : updates) A(u.row, u.col) += u.value;
    return A;
  }

  std::function<void(const std::function<void(const TurnstileUpdate&)>&)> replayer() const {
    return [this](const std::function<void(const TurnstileUpdate&)>& fn) {
      for (const auto& u : updates) fn(u);
    };
  }
};

namespace stream_io {

inline constexpr char kBinaryMagic[5] = {'L', 'P', 'T', 'U', '1'};

/// Text format: first non-comment line "n d", then "i j v" per update;
/// '#' starts a comment line.
inline Stream parse_text(std::istream& in, const std::string& origin = "<stream>") {
  Stream s;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (!have_header) {
      long long n = 0, d = 0;
      if (!(ls >> n >> d) || n < 1 || d < 1) {
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": bad header line (expected 'n d')");
      }
      s.header.n = static_cast<std::uint32_t>(n);
      s.header.d = static_cast<std::uint32_t>(d);
      have_header = true;
      continue;
    }
    long long i = 0, j = 0;
    double v = 0.0;
    if (!(ls >> i >> j >> v)) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": malformed update line");
    }
    if (i < 0 || i >= (long long)s.header.n || j < 0 || j >= (long long)s.header.d) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": index out of range");
    }
    if (!std::isfinite(v)) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": non-finite value");
    }
    s.updates.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j), v});
  }
  if (!have_header) throw std::runtime_error(origin + ": empty stream (missing header)");
  return s;
}

inline void write_text(const Stream& s, std::ostream& out) {
  out << s.header.n << " " << s.header.d << "\n";
  char buf[64];
  for (const auto& u : s.updates) {
    std::snprintf(buf, sizeof(buf), "%u %u %.17g\n", u.row, u.col, u.value);
    out << buf;
  }
}

/// Binary variant: magic "LPTU1", u32 n, u32 d, u64 count, then per update
/// u32 i, u32 j, f64 v (little-endian).
inline void write_binary(const Stream& s, const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open stream for writing: " + path);
  std::fwrite(kBinaryMagic, 1, 5, f);
  std::fwrite(&s.header.n, 4, 1, f);
  std::fwrite(&s.header.d, 4, 1, f);
  const std::uint64_t count = s.updates.size();
  std::fwrite(&count, 8, 1, f);
  for (const auto& u : s.updates) {
    std::fwrite(&u.row, 4, 1, f);
    std::fwrite(&u.col, 4, 1, f);
    std::fwrite(&u.value, 8, 1, f);
  }
  std::fclose(f);
}

inline Stream read_binary(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open stream: " + path);
  auto fail = [&](const std::string& msg) {
    std::fclose(f);
    throw std::runtime_error(path + ": " + msg);
  };
  char magic[5];
  if (std::fread(magic, 1, 5, f) != 5 || std::memcmp(magic, kBinaryMagic, 5) != 0) fail("bad magic");
  Stream s;
  std::uint64_t count = 0;
  if (std::fread(&s.header.n, 4, 1, f) != 1 || std::fread(&s.header.d, 4, 1, f) != 1 ||
      std::fread(&count, 8, 1, f) != 1) {
    fail("truncated header");
  }
  s.updates.resize(count);
  for (auto& u : s.updates) {
    if (std::fread(&u.row, 4, 1, f) != 1 || std::fread(&u.col, 4, 1, f) != 1 ||
        std::fread(&u.value, 8, 1, f) != 1) {
      fail("truncated update record");
    }
    if (u.row >= s.header.n || u.col >= s.header.d) fail("index out of range");
  }
  std::fclose(f);
  return s;
}

inline Stream load(const std::string& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open stream: " + path);
  char magic[5] = {0};
  const std::size_t got = std::fread(magic, 1, 5, f);
  std::fclose(f);
  if (got == 5 && std::memcmp(magic, kBinaryMagic, 5) == 0) return read_binary(path);
  std::ifstream in(path);
  return parse_text(in, path);
}

inline void save_text(const Stream& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open stream for writing: " + path);
  write_text(s, out);
}

}  // namespace stream_io

/// Synthetic instances. Every matrix entry is split into 1-3 additive
/// sub-updates and the whole update sequence is globally shuffled, so the
/// stream exercises genuine turnstile behavior. The exact matrix is returned
/// alongside as oracle sidecar.
struct SyntheticResult {
  Stream stream;
  Matrixd sidecar;
  std::uint32_t heavy_index = 0;  // planted-heavy only
};

namespace detail {

/// Entry splitting + global shuffle, shared by all generators.
inline Stream to_stream(const Matrixd& A, std::mt19937_64& gen) {
  Stream s;
  s.header.n = static_cast<std::uint32_t>(A.rows());
  s.header.d = static_cast<std::uint32_t>(A.cols());
  std::uniform_int_distribution<int> parts_dist(1, 3);
  std::uniform_real_distribution<double> frac(0.1, 0.9);
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    for (Eigen::Index j = 0; j < A.cols(); ++j) {
      const double v = A(i, j);
      if (v == 0.0) continue;
      const int parts = parts_dist(gen);
      double remaining = v;
      for (int t = 0; t + 1 < parts; ++t) {
        const double piece = remaining * frac(gen);
        s.updates.push_back({std::uint32_t(i), std::uint32_t(j), piece});
        remaining -= piece;
      }
      s.updates.push_back({std::uint32_t(i), std::uint32_t(j), remaining});
    }
  }
  std::shuffle(s.updates.begin(), s.updates.end(), gen);
  return s;
}

}  // namespace detail

/// n copies of the same row (value in every column).
inline SyntheticResult gen_identical_rows(std::uint32_t n, std::uint32_t d, double value,
                                          std::uint64_t seed) {
  SyntheticResult out;
  out.sidecar = Matrixd::Constant(n, d, value);
  std::mt19937_64 gen(seed);
  out.stream = detail::to_stream(out.sidecar, gen);
  return out;
}

/// i.i.d. standard Gaussian entries.
inline SyntheticResult gen_gaussian(std::uint32_t n, std::uint32_t d, std::uint64_t seed) {
  SyntheticResult out;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  out.sidecar.resize(n, d);
  for (Eigen::Index i = 0; i < out.sidecar.rows(); ++i)
    for (Eigen::Index j = 0; j < out.sidecar.cols(); ++j) out.sidecar(i, j) = normal(gen);
  out.stream = detail::to_stream(out.sidecar, gen);
  return out;
}

/// Single-column heavy tail n, n/2, n/3, ...
inline SyntheticResult gen_harmonic_demo(std::uint32_t n, std::uint64_t seed) {
  SyntheticResult out;
  out.sidecar.resize(n, 1);
  for (std::uint32_t i = 0; i < n; ++i) out.sidecar(i, 0) = double(n) / double(i + 1);
  std::mt19937_64 gen(seed);
  out.stream = detail::to_stream(out.sidecar, gen);
  return out;
}

/// n-1 random directions of unit lp norm plus one planted row whose lp^p mass
/// is `heavy_mass_fraction` times the tail mass M (the sum over all rows
/// excluding the r/20 largest).
inline SyntheticResult gen_planted_heavy(std::uint32_t n, std::uint32_t d, double p,
                                         double heavy_mass_fraction, std::uint32_t r,
                                         std::uint64_t seed) {
  if (n < 2) throw std::invalid_argument("planted-heavy requires n >= 2");
  SyntheticResult out;
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  out.sidecar.resize(n, d);
  for (Eigen::Index i = 0; i < out.sidecar.rows(); ++i) {
    RowVectord row(d);
    for (Eigen::Index j = 0; j < d; ++j) row(j) = normal(gen);
    row /= std::pow(lp_pow_norm(row, p), 1.0 / p);  // unit lp norm
    out.sidecar.row(i) = row;
  }
  std::uniform_int_distribution<std::uint32_t> pick(0, n - 1);
  out.heavy_index = pick(gen);
  // Tail mass excludes the ceil(r/20) largest rows: the planted row plus
  // (ceil(r/20) - 1) unit rows, each of mass exactly 1.
  const auto excluded = std::min<std::uint64_t>(n - 1, (r + 19) / 20);
  const double tail_mass = double(n - 1) - double(excluded - 1);
  const double heavy_mass = heavy_mass_fraction * tail_mass;
  RowVectord heavy(d);
  for (Eigen::Index j = 0; j < d; ++j) heavy(j) = normal(gen);
  heavy *= std::pow(heavy_mass / lp_pow_norm(heavy, p), 1.0 / p);
  out.sidecar.row(out.heavy_index) = heavy;
  out.stream = detail::to_stream(out.sidecar, gen);
  return out;
}

/// Random stream with dyadic values: every sum of updates is exact in double
/// precision, so re-grouping across shards cannot change a single bit.
inline SyntheticResult gen_dyadic(std::uint32_t n, std::uint32_t d, std::size_t updates,
                                  std::uint64_t seed) {
  SyntheticResult out;
  out.stream.header = {n, d};
  std::mt19937_64 gen(seed);
  std::uniform_int_distribution<std::uint32_t> row(0, n - 1);
  std::uniform_int_distribution<std::uint32_t> col(0, d - 1);
  std::uniform_int_distribution<int> val(-64, 64);
  out.sidecar = Matrixd::Zero(n, d);
  for (std::size_t t = 0; t < updates; ++t) {
    TurnstileUpdate u{row(gen), col(gen), double(val(gen)) / 16.0};
    out.sidecar(u.row, u.col) += u.value;
    out.stream.updates.push_back(u);
  }
  return out;
}

/// Numeric CSV ingestion with label folding. For lp the label column moves to
/// the last output column negated (A = [X, -y]); for the classification
/// losses every feature row is multiplied by -label.
inline Stream ingest_csv(std::istream& in, Eigen::Index label_column, const LossKind& loss,
                         const std::string& origin = "<csv>") {
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> vals;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      const std::string cell = line.substr(pos, comma - pos);
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
        std::string_view rest(cell.data() + used, cell.size() - used);
        if (rest.find_first_not_of(" \t\r") != std::string_view::npos) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": non-numeric cell '" + cell +
                                 "' in column " + std::to_string(vals.size()));
      }
      pos = comma + 1;
    }
    if (!rows.empty() && vals.size() != rows.front().size()) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": inconsistent column count");
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw std::runtime_error(origin + ": empty csv");
  const auto cols = static_cast<Eigen::Index>(rows.front().size());
  if (label_column < 0 || label_column >= cols) throw std::invalid_argument("label column out of range");

  Stream s;
  s.header.n = static_cast<std::uint32_t>(rows.size());
  s.header.d = static_cast<std::uint32_t>(cols);  // features + folded label column for lp
  if (loss.kind != LossKind::kLp) s.header.d -= 1;

  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double label = rows[i][static_cast<std::size_t>(label_column)];
    std::uint32_t out_col = 0;
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (c == label_column) continue;
      double v = rows[i][static_cast<std::size_t>(c)];
      if (loss.kind != LossKind::kLp) v *= -label;
      if (v != 0.0) s.updates.push_back({std::uint32_t(i), out_col, v});
      ++out_col;
    }
    if (loss.kind == LossKind::kLp && label != 0.0) {
      s.updates.push_back({std::uint32_t(i), std::uint32_t(s.header.d - 1), -label});
    }
  }
  return s;
}

}  // namespace lpts
