#include "nss/hadamard.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <vector>

#include "nss/parallel.hpp"

namespace nss::hadamard {
namespace {

constexpr double kScale = 1.0 / static_cast<double>(kOrder);

using WalshRow = std::array<int, kOrder>;

int row_sign_changes(const WalshRow& row) {
    int changes = 0;
    for (std::size_t c = 1; c < kOrder; ++c) changes += (row[c] != row[c - 1]);
    return changes;
}

std::array<WalshRow, kOrder> sequency_ordered_rows() {
    // Sylvester construction: H[i][j] = (-1)^popcount(i & j).
    std::array<WalshRow, kOrder> rows{};
    for (std::size_t i = 0; i < kOrder; ++i)
        for (std::size_t j = 0; j < kOrder; ++j) rows[i][j] = (std::popcount(i & j) % 2 == 0) ? 1 : -1;
    std::sort(rows.begin(), rows.end(),
              [](const WalshRow& a, const WalshRow& b) { return row_sign_changes(a) < row_sign_changes(b); });
    return rows;
}

std::array<HadamardBasis, kOrder> build_bases() {
    const auto rows = sequency_ordered_rows();
    std::array<HadamardBasis, kOrder> bases{
        HadamardBasis{1, Image(kOrder, kOrder)}, HadamardBasis{2, Image(kOrder, kOrder)},
        HadamardBasis{3, Image(kOrder, kOrder)}, HadamardBasis{4, Image(kOrder, kOrder)},
        HadamardBasis{5, Image(kOrder, kOrder)}, HadamardBasis{6, Image(kOrder, kOrder)},
        HadamardBasis{7, Image(kOrder, kOrder)}, HadamardBasis{8, Image(kOrder, kOrder)}};
    for (std::size_t b = 0; b < kOrder; ++b)
        for (std::size_t r = 0; r < kOrder; ++r)
            for (std::size_t c = 0; c < kOrder; ++c)
                bases[b].image.at(r, c) = static_cast<float>(rows[b][c] * kScale);
    return bases;
}

}  // namespace

const std::array<HadamardBasis, kOrder>& hadamard_bases() {
    static const auto bases = build_bases();
    return bases;
}

int sign_changes(const Image& image) {
    int changes = 0;
    for (std::size_t c = 1; c < image.width(); ++c)
        changes += (std::signbit(image.at(0, c)) != std::signbit(image.at(0, c - 1)));
    return changes;
}

Image synthesize(std::span<const double, kOrder> alpha) {
    const auto& bases = hadamard_bases();
    std::vector<float> data(kOrder * kOrder);
    for (std::size_t p = 0; p < data.size(); ++p) {
        double v = 0.0;
        for (std::size_t i = 0; i < kOrder; ++i) v += alpha[i] * static_cast<double>(bases[i].image.data()[p]);
        data[p] = static_cast<float>(v);
    }
    return Image(kOrder, kOrder, std::move(data));
}

CoeffVector fit(const Image& image) {
    if (image.height() != kOrder || image.width() != kOrder)
        throw ShapeError("Hadamard fit expects an 8x8 image, got " + std::to_string(image.height()) + "x" +
                         std::to_string(image.width()));
    const auto& bases = hadamard_bases();
    const auto pixels = image.data();

    CoeffVector out;
    for (std::size_t i = 0; i < kOrder; ++i) {
        const auto basis = bases[i].image.data();
        double dot = 0.0;
        for (std::size_t p = 0; p < pixels.size(); ++p)
            dot += static_cast<double>(pixels[p]) * static_cast<double>(basis[p]);
        out.alpha[i] = dot;
    }

    double residual_sq = 0.0;
    for (std::size_t p = 0; p < pixels.size(); ++p) {
        double explained = 0.0;
        for (std::size_t i = 0; i < kOrder; ++i)
            explained += out.alpha[i] * static_cast<double>(bases[i].image.data()[p]);
        const double r = static_cast<double>(pixels[p]) - explained;
        residual_sq += r * r;
    }
    out.residual_norm = std::sqrt(residual_sq);
    return out;
}

Batch gen_dataset(std::size_t count, std::uint64_t seed, unsigned threads) {
    if (count == 0) throw ValidationError("dataset count must be positive");
    const RngStream base(seed, streams::kDataset);
    std::vector<Image> images(count, Image(kOrder, kOrder));
    parallel_for(count, threads, [&](std::size_t n) {
        auto stream = base.derive(n);
        Coeffs alpha{};
        for (auto& a : alpha) a = 2.0 * stream.next_uniform() - 1.0;
        images[n] = synthesize(alpha);
    });
    return Batch(std::move(images), seed);
}

}  // namespace nss::hadamard
