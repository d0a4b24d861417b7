#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace berm {

// Every random draw in the library belongs to exactly one substream. Substreams
// with different purposes never overlap, so training, pricing and reference
// samples are independent by construction.
enum class Purpose : std::uint32_t {
    training = 1,
    outer = 2,
    nested = 3,
    reference = 4,
    replication = 5,
};

struct StreamKey {
    Purpose purpose = Purpose::outer;
    std::uint64_t replication = 0;
    std::uint64_t path = 0;
    std::uint64_t date = 0;

    friend bool operator==(const StreamKey&, const StreamKey&) = default;
};

/// Master seed plus replication index; the estimators derive all their
/// substreams from this.
struct RunKey {
    std::uint64_t seed = 0;
    std::uint64_t replication = 0;

    StreamKey stream(Purpose p, std::uint64_t path, std::uint64_t date) const {
        return StreamKey{p, replication, path, date};
    }
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic child seed, e.g. one per macro-replication of a sweep.
std::uint64_t derive_seed(std::uint64_t master, Purpose purpose, std::uint64_t index);

/// Philox4x32-10 block: maps (key, counter) to 128 random bits.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 2> key,
                                         std::array<std::uint32_t, 4> counter);

/// Standard normal quantile (Wichura AS241, ~1e-16 relative accuracy).
double inverse_normal_cdf(double p);

/// Sequential standard-normal draws from one substream. Draw i of a stream is a
/// pure function of (seed, key, i).
class NormalStream {
public:
    NormalStream(std::uint64_t seed, const StreamKey& key);

    double next();
    void fill(std::span<double> out);

    /// Uniform in the open interval (0, 1); consumes one 64-bit lane.
    double next_uniform();

private:
    void refill();

    std::array<std::uint32_t, 2> key_{};
    std::uint64_t path_ = 0;
    std::uint64_t date_ = 0;
    std::uint64_t block_ = 0;
    std::array<std::uint64_t, 2> lanes_{};
    int used_ = 2;
};

}  // namespace berm
