#pragma once

#include <cstdint>
#include <stdexcept>

#include <Eigen/Dense>

namespace lpts {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using Matrixd = Matrix<double>;
using Vectord = Vector<double>;
using RowVectord = RowVector<double>;

/// One additive update (i, j, v): entry A_ij becomes A_ij + v.
struct TurnstileUpdate {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  double value = 0.0;
};

/// Declared dimensions of the implicit matrix behind a stream.
struct StreamHeader {
  std::uint32_t n = 0;
  std::uint32_t d = 0;

  void validate() const {
    if (n < 1 || d < 1) throw std::invalid_argument("stream header requires n >= 1 and d >= 1");
  }
};

}  // namespace lpts
