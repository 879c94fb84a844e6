#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace nnprof {

// Counter-based generator. Every value is a pure function of
// (seed, stream label, counter), so independent substreams of one run
// ("init", "shuffle", ...) never collide and any draw can be reproduced
// without replaying the ones before it.
class Rng {
public:
    Rng(std::uint64_t seed, std::string_view stream, std::uint64_t start_counter = 0);

    std::uint64_t next_u64();
    double next_double();  // uniform [0, 1)
    float next_float();    // uniform [0, 1)
    std::uint64_t next_below(std::uint64_t n);  // uniform [0, n), unbiased
    float normal(float mean = 0.0f, float stddev = 1.0f);

    std::uint64_t counter() const { return counter_; }

    static std::uint64_t fnv1a(std::string_view s);
    static std::uint64_t splitmix(std::uint64_t x);

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace nnprof
