#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace fedgraph {

// Purposes used to derive independent substreams from a run seed.
enum class Stream : std::uint64_t {
    partition = 1,
    split = 2,
    sampling = 3,
    dropout = 4,
    init = 5,
    ddpg_noise = 6,
    ddpg_batch = 7,
    ddpg_init = 8,
    synth = 9,
};

/// xoshiro256** seeded through splitmix64. Draws are bit-identical across
/// platforms; distributions are implemented here rather than via <random>
/// because the standard distributions are implementation-defined.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed = 0);

    // Independent child stream keyed by (purpose, index); does not advance *this.
    RngStream derive(Stream purpose, std::uint64_t index = 0) const;
    static RngStream derive(std::uint64_t seed, Stream purpose, std::uint64_t index = 0);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();
    // Uniform in [0, 1) with 53 random bits.
    double uniform();
    // Uniform integer in [0, n); n > 0.
    std::uint64_t uniform_int(std::uint64_t n);
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }
    bool bernoulli(double p) { return uniform() < p; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices from [0, n), in draw order (partial Fisher-Yates).
    std::vector<std::uint32_t> sample_without_replacement(std::uint32_t n, std::uint32_t k);

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> s_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state);

}  // namespace fedgraph
