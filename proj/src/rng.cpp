#include "sm/rng.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace sm {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

Rng::Rng(std::uint64_t seed) : seed_(seed) {
    std::uint64_t x = seed;
    for (auto& w : s_) w = splitmix64(x);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    if (has_cached_) {
        has_cached_ = false;
        return cached_normal_;
    }
    double u1 = 0.0;
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int(0)");
    // Rejection sampling keeps the distribution exact.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = next_u64();
    } while (v >= limit);
    return v % n;
}

Rng Rng::spawn(std::uint64_t stream_id) const {
    std::uint64_t mix = seed_;
    std::uint64_t a = splitmix64(mix);
    mix ^= stream_id * 0x9E3779B97F4A7C15ull;
    std::uint64_t b = splitmix64(mix);
    return Rng(a ^ rotl(b, 31) ^ stream_id);
}

std::string Rng::state_hex() const {
    char buf[4 * 16 + 2 * 16 + 8];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx%016llx%016llx%016llx%d",
                  static_cast<unsigned long long>(s_[0]), static_cast<unsigned long long>(s_[1]),
                  static_cast<unsigned long long>(s_[2]), static_cast<unsigned long long>(s_[3]),
                  static_cast<unsigned long long>(seed_), has_cached_ ? 1 : 0);
    return buf;
}

void Rng::restore_hex(const std::string& hex) {
    if (hex.size() < 81) throw std::invalid_argument("bad rng state string");
    auto parse = [&](std::size_t off) {
        return std::stoull(hex.substr(off, 16), nullptr, 16);
    };
    for (int i = 0; i < 4; ++i) s_[i] = parse(16 * static_cast<std::size_t>(i));
    seed_ = parse(64);
    has_cached_ = hex[80] == '1';
    cached_normal_ = 0.0;  // cached half-pair is dropped on restore
}

}  // namespace sm
