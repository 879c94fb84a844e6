#include "nnprof/rng.hpp"

#include <cmath>

#include "nnprof/errors.hpp"

namespace nnprof {

std::uint64_t Rng::fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t Rng::splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::string_view stream, std::uint64_t start_counter)
    : key_(splitmix(seed ^ splitmix(fnv1a(stream)))), counter_(start_counter) {}

std::uint64_t Rng::next_u64() {
    ++counter_;
    // splitmix64 output function over the keyed Weyl sequence; jumping the
    // counter is as cheap as incrementing it.
    std::uint64_t z = key_ + counter_ * 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

float Rng::next_float() {
    return static_cast<float>(next_double());
}

std::uint64_t Rng::next_below(std::uint64_t n) {
    if (n == 0) throw ValidationError("next_below: bound must be positive");
    // reject the uneven remainder at the bottom of the 64-bit range
    std::uint64_t threshold = (0 - n) % n;
    for (;;) {
        std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

float Rng::normal(float mean, float stddev) {
    if (have_spare_) {
        have_spare_ = false;
        return static_cast<float>(mean + stddev * spare_);
    }
    // Box-Muller in double; u1 shifted into (0, 1] so the log is finite.
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return static_cast<float>(mean + stddev * (r * std::cos(a)));
}

}  // namespace nnprof
