#pragma once

#include <cstdint>
#include <array>

namespace nss {

/// Deterministic random stream keyed by (seed, stream_id).
///
/// The generator is xoshiro256** whose state is derived from the key with
/// SplitMix64, so two streams with equal keys replay the same sequence and
/// streams with different keys are decorrelated. Child streams are obtained
/// with derive(), which hashes an extra key into the stream id; this is how
/// per-sample and per-step streams are built without sharing state between
/// threads.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Stream for a sub-task, e.g. derive(sample_index) or derive(step).
    RngStream derive(std::uint64_t key) const;

    std::uint64_t next_u64() noexcept;

    /// Uniform double in [0, 1) with 53 random bits.
    double next_uniform() noexcept;

    /// Uniform integer in [0, bound) without modulo bias. bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound) noexcept;

    /// Standard normal variate (Box-Muller, both outputs used in turn).
    double next_gaussian() noexcept;

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::array<std::uint64_t, 4> state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Free-function spelling of RngStream::next_gaussian; the caller scales by sigma.
inline double gaussian_draw(RngStream& stream) noexcept { return stream.next_gaussian(); }

/// Well-known stream ids used by the pipeline. Keeping them in one place
/// guarantees that, for instance, the latent draws never alias the filter noise.
namespace streams {
inline constexpr std::uint64_t kDataset = 0x64617461;      // "data"
inline constexpr std::uint64_t kFilter = 0x66696c74;       // "filt"
inline constexpr std::uint64_t kFilterReal = 0x7265616c;   // "real"
inline constexpr std::uint64_t kFilterFake = 0x66616b65;   // "fake"
inline constexpr std::uint64_t kLatent = 0x6c61746e;       // "latn"
inline constexpr std::uint64_t kShuffle = 0x73687566;      // "shuf"
inline constexpr std::uint64_t kInitG = 0x696e6947;        // "iniG"
inline constexpr std::uint64_t kInitD = 0x696e6944;        // "iniD"
inline constexpr std::uint64_t kSample = 0x736d706c;       // "smpl"
inline constexpr std::uint64_t kCurve = 0x63757276;        // "curv"
}  // namespace streams

}  // namespace nss
