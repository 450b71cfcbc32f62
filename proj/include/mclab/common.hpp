#pragma once

#include <atomic>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mclab {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy, mirrored by the CLI exit codes:
//   config_error -> 1, data_error -> 2, numerical_error -> 3.
struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct config_error : error {
    using error::error;
};
struct data_error : error {
    using error::error;
};
struct numerical_error : error {
    using error::error;
};

// Raised when observed values admit no exact rank-1 completion; carries the
// edge that closed the violating cycle.
struct inconsistency_error : data_error {
    inconsistency_error(const std::string& msg, std::size_t row_, std::size_t col_)
        : data_error(msg), row(row_), col(col_) {}
    std::size_t row;
    std::size_t col;
};

namespace rng {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t x) {
    x ^= x >> 30;
    x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27;
    x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// Named sub-streams. Every random draw in the library is keyed by
// (seed, stream, index), so results do not depend on evaluation order.
enum class Stream : std::uint64_t {
    factor_u = 1,
    factor_v,
    edge_sample,
    iid_values,
    init_u,
    init_v,
    moves,
    holdout,
    comparison,
    experiment,
    optimizer,
};

constexpr std::uint64_t derive(std::uint64_t seed, Stream stream, std::uint64_t index) {
    std::uint64_t h = mix64(seed + kGolden);
    h = mix64(h ^ (static_cast<std::uint64_t>(stream) * 0xd6e8feb86659fd93ULL));
    return mix64(h ^ index);
}

constexpr double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Uniform double in [0, 1) at a fixed counter position.
constexpr double unit(std::uint64_t seed, Stream stream, std::uint64_t index) {
    return to_unit(derive(seed, stream, index));
}

// Unbiased integer in [0, bound) consuming counter positions from `counter`
// (Lemire's multiply-shift with rejection).
inline std::uint64_t below(std::uint64_t seed, Stream stream, std::uint64_t& counter,
                           std::uint64_t bound) {
    for (;;) {
        std::uint64_t x = derive(seed, stream, counter++);
        __uint128_t m = static_cast<__uint128_t>(x) * bound;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < bound) {
            std::uint64_t threshold = (0 - bound) % bound;
            if (lo < threshold) continue;
        }
        return static_cast<std::uint64_t>(m >> 64);
    }
}

// Sequential stream for solver inner loops; seeded deterministically.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
    SplitMix64(std::uint64_t seed, Stream stream)
        : state_(derive(seed, stream, 0xa5a5a5a5a5a5a5a5ULL)) {}

    std::uint64_t next() {
        state_ += kGolden;
        return mix64(state_);
    }
    double unit() { return to_unit(next()); }
    std::uint64_t below(std::uint64_t bound) {
        for (;;) {
            std::uint64_t x = next();
            __uint128_t m = static_cast<__uint128_t>(x) * bound;
            auto lo = static_cast<std::uint64_t>(m);
            if (lo < bound) {
                std::uint64_t threshold = (0 - bound) % bound;
                if (lo < threshold) continue;
            }
            return static_cast<std::uint64_t>(m >> 64);
        }
    }

  private:
    std::uint64_t state_;
};

}  // namespace rng

// Runs fn(i) for i in [0, count). Worker threads pull indices from a shared
// counter; fn must be safe to run concurrently for distinct i.
template <typename Fn>
void parallel_for(std::size_t jobs, std::size_t count, Fn&& fn) {
    if (count == 0) return;
    if (jobs <= 1 || count == 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::size_t workers = std::min(jobs, count);
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace mclab
