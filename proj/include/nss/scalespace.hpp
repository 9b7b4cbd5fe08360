#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "nss/rng.hpp"
#include "nss/tensorio.hpp"

namespace nss {

/// 3x3 convolution kernel. Weights sum to one and are symmetric under
/// horizontal and vertical flips; the constructor enforces both.
class Kernel {
public:
    explicit Kernel(const std::array<double, 9>& weights);

    /// Weight at offset (dy, dx), each in {-1, 0, 1}.
    double at(int dy, int dx) const noexcept { return weights_[static_cast<std::size_t>((dy + 1) * 3 + dx + 1)]; }
    const std::array<double, 9>& weights() const noexcept { return weights_; }

private:
    std::array<double, 9> weights_;
};

/// Normalized binomial kernel (1/16) [[1,2,1],[2,4,2],[1,2,1]].
Kernel gaussian_kernel3();

enum class FilterKind : std::uint8_t {
    None,
    ScaleSpace,       ///< t smoothing steps
    NoiseSpace,       ///< t additive noise steps
    NoisyScaleSpace,  ///< t (smooth, then add noise) steps
};

std::string_view to_string(FilterKind kind) noexcept;

/// Accepts "none", "ss", "ns" and "nss"; throws DomainError otherwise.
FilterKind parse_filter_kind(std::string_view name);

struct FilterSpec {
    FilterKind kind = FilterKind::None;
    int t = 0;
    double sigma = 0.15;  ///< per-step noise standard deviation
    Kernel kernel = gaussian_kernel3();

    bool is_identity() const noexcept { return kind == FilterKind::None || t == 0; }
};

struct AnnealSchedule {
    int initial_t = 256;
    double beta = 20.0;
};

/// Same-shape convolution with clamp-to-edge boundary handling.
Image convolve(const Image& image, const Kernel& kernel);

/// t-fold convolution; t == 0 returns the input unchanged.
Image scale_space(const Image& image, int t, const Kernel& kernel = gaussian_kernel3());

/// Adds t independent pixelwise N(0, sigma^2) noises. Draws are taken step by
/// step, each step in row-major pixel order.
Image noise_space(const Image& image, int t, double sigma, RngStream& stream);

/// t-fold recursion x <- k * x + eps. Draw order matches noise_space; with
/// sigma == 0 no draws are consumed and the result equals scale_space.
Image noisy_scale_space(const Image& image, int t, double sigma, RngStream& stream,
                        const Kernel& kernel = gaussian_kernel3());

/// Dispatches on spec.kind.
Image apply_filter(const Image& image, const FilterSpec& spec, RngStream& stream);

/// Filters every image with its own stream base_stream.derive(index). The
/// output does not depend on `threads`.
Batch apply_filter(const Batch& batch, const FilterSpec& spec, const RngStream& base_stream,
                   unsigned threads = 1);

/// round(T * exp(-beta * i)) for relative iteration i in [0, 1].
int anneal_t(double i, const AnnealSchedule& schedule);

// Plane-level kernels in double precision. These back the Image functions
// above and are used directly by the training loop, which needs the adjoint
// to push gradients through the filter.

void convolve_plane(std::span<const double> in, std::span<double> out, std::size_t height, std::size_t width,
                    const Kernel& kernel);

/// Transpose of convolve_plane (clamp-to-edge makes it differ at the border).
void convolve_plane_adjoint(std::span<const double> in, std::span<double> out, std::size_t height,
                            std::size_t width, const Kernel& kernel);

/// In-place filter of one plane.
void filter_plane(std::span<double> plane, std::size_t height, std::size_t width, const FilterSpec& spec,
                  RngStream& stream);

/// In-place Jacobian-transpose of filter_plane. The filters are affine in the
/// input, so this does not depend on the noise.
void filter_plane_adjoint(std::span<double> grad, std::size_t height, std::size_t width, const FilterSpec& spec);

}  // namespace nss
