#pragma once

#include <array>
#include <cstdint>

namespace lilkit {

/// Philox4x32 with 10 rounds (Salmon et al., SC 2011).
std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> counter,
                                           std::array<std::uint32_t, 2> key) noexcept;

std::uint64_t splitmix64(std::uint64_t x) noexcept;

/// Counter-based random stream identified by (master_seed, stream_index).
///
/// The key is the master seed and the upper half of the counter is the
/// stream index, so streams never overlap. Child streams are a pure function
/// of the parent's identity and the child index; they do not depend on how
/// many numbers the parent has already produced.
class RngStream {
  public:
    using result_type = std::uint64_t;

    explicit RngStream(std::uint64_t master_seed, std::uint64_t stream_index = 0) noexcept;

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() noexcept;

    /// Uniform on the open interval (0, 1) with 53-bit resolution.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    double exponential(double rate) noexcept;
    double normal() noexcept;
    /// Uniform integer in [0, n), n > 0.
    std::uint64_t below(std::uint64_t n) noexcept;

    RngStream child(std::uint64_t index) const noexcept;

    std::uint64_t master_seed() const noexcept { return seed_; }
    std::uint64_t stream_index() const noexcept { return stream_; }

  private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace lilkit
