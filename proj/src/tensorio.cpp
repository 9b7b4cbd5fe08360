#include "nss/tensorio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

namespace nss {
namespace {

constexpr char kMagic[4] = {'N', 'S', 'S', 'T'};
constexpr std::uint8_t kBatchRank = 3;

void put_u32(std::vector<char>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const std::vector<char>& in, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
        v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
    return v;
}

std::uint32_t checked_dim(std::size_t n, const char* what) {
    if (n > 0xFFFFFFFFu) throw ValidationError(std::string("tensor dimension too large: ") + what);
    return static_cast<std::uint32_t>(n);
}

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failure: " + path.string());
    return bytes;
}

void dump(const std::vector<char>& bytes, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failure: " + path.string());
}

}  // namespace

Image::Image(std::size_t height, std::size_t width)
    : height_(height), width_(width), data_(height * width, 0.0f) {
    if (height == 0 || width == 0) throw ShapeError("image dimensions must be positive");
}

Image::Image(std::size_t height, std::size_t width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
    if (height == 0 || width == 0) throw ShapeError("image dimensions must be positive");
    if (data_.size() != height * width)
        throw ShapeError("image data length " + std::to_string(data_.size()) + " != " +
                         std::to_string(height) + "x" + std::to_string(width));
    if (!std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); }))
        throw ValidationError("image contains a non-finite value");
}

bool operator==(const Image& a, const Image& b) noexcept {
    if (a.height_ != b.height_ || a.width_ != b.width_) return false;
    return std::equal(a.data_.begin(), a.data_.end(), b.data_.begin(),
                      [](float x, float y) { return std::bit_cast<std::uint32_t>(x) == std::bit_cast<std::uint32_t>(y); });
}

Batch::Batch(std::vector<Image> images, std::uint64_t origin_seed)
    : images_(std::move(images)), origin_seed_(origin_seed) {
    if (images_.empty()) throw ValidationError("batch must contain at least one image");
    const auto h = images_.front().height();
    const auto w = images_.front().width();
    for (const auto& img : images_)
        if (img.height() != h || img.width() != w) throw ShapeError("batch images must share one shape");
}

void write_tensor(const Batch& batch, const std::filesystem::path& path) {
    if (batch.size() == 0) throw ValidationError("refusing to write an empty batch");
    const std::size_t pixels = batch.height() * batch.width();

    std::vector<char> bytes;
    bytes.reserve(kTensorHeaderBytes + batch.size() * pixels * 4);
    bytes.insert(bytes.end(), std::begin(kMagic), std::end(kMagic));
    put_u32(bytes, kTensorFormatVersion);
    bytes.push_back(static_cast<char>(kBatchRank));
    put_u32(bytes, checked_dim(batch.size(), "count"));
    put_u32(bytes, checked_dim(batch.height(), "height"));
    put_u32(bytes, checked_dim(batch.width(), "width"));
    for (const auto& img : batch)
        for (float v : img.data()) put_u32(bytes, std::bit_cast<std::uint32_t>(v));

    dump(bytes, path);
}

Batch read_tensor(const std::filesystem::path& path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 4 || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin()))
        throw FormatError("not an NSST file (bad magic): " + path.string());
    if (bytes.size() < 9) throw CorruptionError("truncated NSST header: " + path.string());
    const auto version = get_u32(bytes, 4);
    if (version != kTensorFormatVersion)
        throw FormatError("unsupported NSST version " + std::to_string(version) + ": " + path.string());
    const auto rank = static_cast<std::uint8_t>(bytes[8]);
    if (rank != kBatchRank)
        throw FormatError("unsupported NSST rank " + std::to_string(rank) + ": " + path.string());
    if (bytes.size() < kTensorHeaderBytes) throw CorruptionError("truncated NSST header: " + path.string());

    const std::size_t count = get_u32(bytes, 9);
    const std::size_t height = get_u32(bytes, 13);
    const std::size_t width = get_u32(bytes, 17);
    if (count == 0 || height == 0 || width == 0)
        throw FormatError("NSST dimensions must be positive: " + path.string());

    const std::size_t pixels = height * width;
    const std::size_t expected = kTensorHeaderBytes + count * pixels * 4;
    if (bytes.size() < expected)
        throw CorruptionError("NSST payload truncated (" + std::to_string(bytes.size()) + " of " +
                              std::to_string(expected) + " bytes): " + path.string());
    if (bytes.size() > expected) throw CorruptionError("NSST file has trailing bytes: " + path.string());

    std::vector<Image> images;
    images.reserve(count);
    std::size_t offset = kTensorHeaderBytes;
    for (std::size_t n = 0; n < count; ++n) {
        std::vector<float> data(pixels);
        for (auto& v : data) {
            v = std::bit_cast<float>(get_u32(bytes, offset));
            offset += 4;
        }
        images.emplace_back(height, width, std::move(data));  // rejects NaN/Inf
    }
    return Batch(std::move(images));
}

std::uint8_t pgm_level(float value) noexcept {
    double level = (static_cast<double>(value) + 1.0) / 2.0;
    if (!(level >= 0.0)) level = 0.0;  // also catches NaN
    if (level > 1.0) level = 1.0;
    return static_cast<std::uint8_t>(std::lround(level * 255.0));
}

void export_pgm(const Image& image, const std::filesystem::path& path) {
    const std::string header =
        "P5\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    std::vector<char> bytes(header.begin(), header.end());
    bytes.reserve(header.size() + image.size());
    for (float v : image.data()) bytes.push_back(static_cast<char>(pgm_level(v)));
    dump(bytes, path);
}

}  // namespace nss
