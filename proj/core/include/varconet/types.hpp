#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace varconet {

// All computation runs in 64-bit; only on-disk blobs are 32-bit.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

// Independent stream for (seed, index); used wherever per-item generation
// must not depend on processing order.
inline Rng make_stream(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x56434eu};
  return Rng(seq);
}

// Number of upper-triangle entries of an R x R matrix.
constexpr std::size_t n_pairs(std::size_t regions) { return regions * (regions - 1) / 2; }

}  // namespace varconet
