#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "nss/error.hpp"
#include "nss/rng.hpp"

namespace nss {

/// Single-channel image, row-major float intensities, nominal range [-1, 1].
class Image {
public:
    /// Zero-filled image.
    Image(std::size_t height, std::size_t width);

    /// Takes ownership of `data`; throws ShapeError on a size mismatch and
    /// ValidationError if any value is NaN or infinite.
    Image(std::size_t height, std::size_t width, std::vector<float> data);

    std::size_t height() const noexcept { return height_; }
    std::size_t width() const noexcept { return width_; }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    float at(std::size_t row, std::size_t col) const { return data_[row * width_ + col]; }
    float& at(std::size_t row, std::size_t col) { return data_[row * width_ + col]; }

    /// Bitwise comparison of shape and payload.
    friend bool operator==(const Image& a, const Image& b) noexcept;

private:
    std::size_t height_;
    std::size_t width_;
    std::vector<float> data_;
};

/// Non-empty, shape-homogeneous, ordered set of images.
///
/// origin_seed records which seed produced the batch; it is bookkeeping only
/// and is neither persisted in NSST files nor part of equality.
class Batch {
public:
    explicit Batch(std::vector<Image> images, std::uint64_t origin_seed = 0);

    std::size_t size() const noexcept { return images_.size(); }
    std::size_t height() const noexcept { return images_.front().height(); }
    std::size_t width() const noexcept { return images_.front().width(); }
    std::uint64_t origin_seed() const noexcept { return origin_seed_; }

    const Image& operator[](std::size_t i) const { return images_[i]; }
    const std::vector<Image>& images() const noexcept { return images_; }

    auto begin() const noexcept { return images_.begin(); }
    auto end() const noexcept { return images_.end(); }

    friend bool operator==(const Batch& a, const Batch& b) noexcept { return a.images_ == b.images_; }

private:
    std::vector<Image> images_;
    std::uint64_t origin_seed_;
};

inline constexpr std::uint32_t kTensorFormatVersion = 1;

/// Size in bytes of the NSST header for a rank-3 tensor: magic, version,
/// rank byte and three u32 dimensions.
inline constexpr std::size_t kTensorHeaderBytes = 4 + 4 + 1 + 3 * 4;

/// Writes "NSST" | u32 version | u8 rank=3 | u32 count,height,width | f32 payload,
/// all little-endian, image-major then row-major.
void write_tensor(const Batch& batch, const std::filesystem::path& path);

Batch read_tensor(const std::filesystem::path& path);

/// Binary 8-bit PGM ("P5", maxval 255); v maps to round(clamp((v+1)/2, 0, 1) * 255).
void export_pgm(const Image& image, const std::filesystem::path& path);

/// The PGM byte for a single intensity.
std::uint8_t pgm_level(float value) noexcept;

}  // namespace nss
