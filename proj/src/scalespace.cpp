#include "nss/scalespace.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "nss/parallel.hpp"

namespace nss {
namespace {

void check_steps(int t, double sigma) {
    if (t < 0) throw DomainError("filter time t must be non-negative, got " + std::to_string(t));
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw DomainError("noise sigma must be finite and non-negative");
}

std::vector<double> to_plane(const Image& image) {
    return {image.data().begin(), image.data().end()};
}

Image from_plane(const std::vector<double>& plane, std::size_t height, std::size_t width) {
    std::vector<float> data(plane.size());
    std::transform(plane.begin(), plane.end(), data.begin(), [](double v) { return static_cast<float>(v); });
    return Image(height, width, std::move(data));
}

void smooth_steps(std::vector<double>& plane, std::size_t height, std::size_t width, int t, const Kernel& kernel) {
    std::vector<double> scratch(plane.size());
    for (int step = 0; step < t; ++step) {
        convolve_plane(plane, scratch, height, width, kernel);
        plane.swap(scratch);
    }
}

void add_noise(std::span<double> plane, double sigma, RngStream& stream) {
    for (auto& v : plane) v += sigma * gaussian_draw(stream);
}

}  // namespace

Kernel::Kernel(const std::array<double, 9>& weights) : weights_(weights) {
    double sum = 0.0;
    for (double w : weights_) sum += w;
    if (std::abs(sum - 1.0) > 1e-12) throw DomainError("kernel weights must sum to 1");
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
            if (at(dy, dx) != at(-dy, dx) || at(dy, dx) != at(dy, -dx))
                throw DomainError("kernel must be symmetric under horizontal and vertical flips");
}

Kernel gaussian_kernel3() {
    return Kernel({1.0 / 16, 2.0 / 16, 1.0 / 16,
                   2.0 / 16, 4.0 / 16, 2.0 / 16,
                   1.0 / 16, 2.0 / 16, 1.0 / 16});
}

std::string_view to_string(FilterKind kind) noexcept {
    switch (kind) {
        case FilterKind::None: return "none";
        case FilterKind::ScaleSpace: return "ss";
        case FilterKind::NoiseSpace: return "ns";
        case FilterKind::NoisyScaleSpace: return "nss";
    }
    return "none";
}

FilterKind parse_filter_kind(std::string_view name) {
    if (name == "none") return FilterKind::None;
    if (name == "ss") return FilterKind::ScaleSpace;
    if (name == "ns") return FilterKind::NoiseSpace;
    if (name == "nss") return FilterKind::NoisyScaleSpace;
    throw DomainError("unknown filter kind '" + std::string(name) + "' (expected none|ss|ns|nss)");
}

void convolve_plane(std::span<const double> in, std::span<double> out, std::size_t height, std::size_t width,
                    const Kernel& kernel) {
    const auto h = static_cast<std::ptrdiff_t>(height);
    const auto w = static_cast<std::ptrdiff_t>(width);
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            double acc = 0.0;
            for (int dy = -1; dy <= 1; ++dy) {
                const auto rr = std::clamp<std::ptrdiff_t>(r + dy, 0, h - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto cc = std::clamp<std::ptrdiff_t>(c + dx, 0, w - 1);
                    acc += kernel.at(dy, dx) * in[static_cast<std::size_t>(rr * w + cc)];
                }
            }
            out[static_cast<std::size_t>(r * w + c)] = acc;
        }
    }
}

void convolve_plane_adjoint(std::span<const double> in, std::span<double> out, std::size_t height,
                            std::size_t width, const Kernel& kernel) {
    const auto h = static_cast<std::ptrdiff_t>(height);
    const auto w = static_cast<std::ptrdiff_t>(width);
    std::fill(out.begin(), out.end(), 0.0);
    for (std::ptrdiff_t r = 0; r < h; ++r) {
        for (std::ptrdiff_t c = 0; c < w; ++c) {
            const double g = in[static_cast<std::size_t>(r * w + c)];
            for (int dy = -1; dy <= 1; ++dy) {
                const auto rr = std::clamp<std::ptrdiff_t>(r + dy, 0, h - 1);
                for (int dx = -1; dx <= 1; ++dx) {
                    const auto cc = std::clamp<std::ptrdiff_t>(c + dx, 0, w - 1);
                    out[static_cast<std::size_t>(rr * w + cc)] += kernel.at(dy, dx) * g;
                }
            }
        }
    }
}

void filter_plane(std::span<double> plane, std::size_t height, std::size_t width, const FilterSpec& spec,
                  RngStream& stream) {
    check_steps(spec.t, spec.sigma);
    if (spec.is_identity()) return;
    const bool smooth = spec.kind == FilterKind::ScaleSpace || spec.kind == FilterKind::NoisyScaleSpace;
    const bool noisy = (spec.kind == FilterKind::NoiseSpace || spec.kind == FilterKind::NoisyScaleSpace) &&
                       spec.sigma > 0.0;
    std::vector<double> scratch(smooth ? plane.size() : 0);
    for (int step = 0; step < spec.t; ++step) {
        if (smooth) {
            convolve_plane(plane, scratch, height, width, spec.kernel);
            std::copy(scratch.begin(), scratch.end(), plane.begin());
        }
        if (noisy) add_noise(plane, spec.sigma, stream);
    }
}

void filter_plane_adjoint(std::span<double> grad, std::size_t height, std::size_t width, const FilterSpec& spec) {
    check_steps(spec.t, spec.sigma);
    if (spec.is_identity() || spec.kind == FilterKind::NoiseSpace) return;
    std::vector<double> scratch(grad.size());
    for (int step = 0; step < spec.t; ++step) {
        convolve_plane_adjoint(grad, scratch, height, width, spec.kernel);
        std::copy(scratch.begin(), scratch.end(), grad.begin());
    }
}

Image convolve(const Image& image, const Kernel& kernel) {
    const auto in = to_plane(image);
    std::vector<double> out(in.size());
    convolve_plane(in, out, image.height(), image.width(), kernel);
    return from_plane(out, image.height(), image.width());
}

Image scale_space(const Image& image, int t, const Kernel& kernel) {
    check_steps(t, 0.0);
    if (t == 0) return image;
    auto plane = to_plane(image);
    smooth_steps(plane, image.height(), image.width(), t, kernel);
    return from_plane(plane, image.height(), image.width());
}

Image noise_space(const Image& image, int t, double sigma, RngStream& stream) {
    return apply_filter(image, FilterSpec{FilterKind::NoiseSpace, t, sigma}, stream);
}

Image noisy_scale_space(const Image& image, int t, double sigma, RngStream& stream, const Kernel& kernel) {
    return apply_filter(image, FilterSpec{FilterKind::NoisyScaleSpace, t, sigma, kernel}, stream);
}

Image apply_filter(const Image& image, const FilterSpec& spec, RngStream& stream) {
    check_steps(spec.t, spec.sigma);
    if (spec.is_identity()) return image;
    auto plane = to_plane(image);
    filter_plane(plane, image.height(), image.width(), spec, stream);
    return from_plane(plane, image.height(), image.width());
}

Batch apply_filter(const Batch& batch, const FilterSpec& spec, const RngStream& base_stream, unsigned threads) {
    check_steps(spec.t, spec.sigma);
    if (spec.is_identity()) return batch;
    std::vector<Image> out(batch.size(), Image(batch.height(), batch.width()));
    parallel_for(batch.size(), threads, [&](std::size_t i) {
        auto stream = base_stream.derive(i);
        out[i] = apply_filter(batch[i], spec, stream);
    });
    return Batch(std::move(out), batch.origin_seed());
}

int anneal_t(double i, const AnnealSchedule& schedule) {
    if (!(i >= 0.0 && i <= 1.0)) throw DomainError("relative iteration must lie in [0, 1]");
    if (schedule.initial_t < 0) throw DomainError("initial time T must be non-negative");
    if (!(schedule.beta > 0.0)) throw DomainError("decay power beta must be positive");
    const double t = static_cast<double>(schedule.initial_t) * std::exp(-schedule.beta * i);
    return std::max(0, static_cast<int>(std::lround(t)));
}

}  // namespace nss
