#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include "nss/tensorio.hpp"

namespace nss::hadamard {

inline constexpr std::size_t kOrder = 8;

/// Size of the synthetic corpus used for the full-scale coefficient study.
inline constexpr std::size_t kFullCorpusSize = 200000;

using Coeffs = std::array<double, kOrder>;

/// One vertical-stripe basis image. index runs 1..8 in sequency order, and
/// index - 1 equals the number of sign changes across a row.
struct HadamardBasis {
    int index;
    Image image;  ///< 8x8, entries +-1/8
};

/// Order-8 Walsh rows sorted by sign-change count, each replicated down all
/// eight rows and scaled by 1/8 so that the set is orthonormal.
const std::array<HadamardBasis, kOrder>& hadamard_bases();

/// Sign changes between horizontally adjacent pixels of the first row.
int sign_changes(const Image& image);

/// sum_i alpha_i B_i, accumulated in double and rounded once.
Image synthesize(std::span<const double, kOrder> alpha);

struct CoeffVector {
    Coeffs alpha{};
    double residual_norm = 0.0;  ///< L2 norm of the out-of-span component
};

/// Orthonormal projection onto the bases. Throws ShapeError unless 8x8.
CoeffVector fit(const Image& image);

/// count images from i.i.d. U(-1, 1) coefficients; sample n draws from
/// RngStream(seed, streams::kDataset).derive(n).
Batch gen_dataset(std::size_t count, std::uint64_t seed, unsigned threads = 1);

}  // namespace nss::hadamard
