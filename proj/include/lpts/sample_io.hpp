#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "lpts/sampler.hpp"

namespace lpts {

/// Sample/coreset CSV: comment header with the run parameters, then one line
/// per entry: index, weight, prob_estimate, row values.
inline void save_sample_csv(const WeightedSampled& sample, const std::string& path, double p,
                            std::uint32_t k, std::uint64_t seed, const std::string& mode) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open sample file for writing: " + path);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "# p=%.17g k=%u alpha=%.17g seed=%llu mode=%s\n", p, k,
                sample.alpha, static_cast<unsigned long long>(seed), mode.c_str());
  f << buf;
  f << "index,weight,prob_estimate,row...\n";
  for (const auto& e : sample.entries) {
    std::snprintf(buf, sizeof(buf), "%u,%.17g,%.17g", e.index, e.weight, e.prob_estimate);
    f << buf;
    for (Eigen::Index c = 0; c < e.row.size(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.17g", double(e.row(c)));
      f << buf;
    }
    f << "\n";
  }
}

inline WeightedSampled load_sample_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open sample file: " + path);
  WeightedSampled out;
  std::string line;
  if (!std::getline(f, line) || line.rfind("# p=", 0) != 0) {
    throw std::runtime_error("not a sample csv: " + path);
  }
  {
    const auto pos = line.find("alpha=");
    if (pos != std::string::npos) out.alpha = std::stod(line.substr(pos + 6));
  }
  std::getline(f, line);  // column header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> vals;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      std::size_t comma = line.find(',', pos);
      if (comma == std::string::npos) comma = line.size();
      vals.push_back(std::stod(line.substr(pos, comma - pos)));
      pos = comma + 1;
    }
    if (vals.size() < 4) throw std::runtime_error("bad sample row in " + path);
    SampleEntry<double> e;
    e.index = static_cast<std::uint32_t>(vals[0]);
    e.weight = vals[1];
    e.prob_estimate = vals[2];
    e.row.resize(Eigen::Index(vals.size() - 3));
    for (std::size_t c = 3; c < vals.size(); ++c) e.row(Eigen::Index(c - 3)) = vals[c];
    e.norm_p = 0.0;
    out.entries.push_back(std::move(e));
  }
  return out;
}

}  // namespace lpts
