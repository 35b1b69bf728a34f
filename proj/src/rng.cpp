#include "ddgan/rng.hpp"

#include <cmath>

namespace ddgan {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t mix3(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
    std::uint64_t x = a;
    splitmix64(x);
    x ^= b + 0x9e3779b97f4a7c15ULL;
    splitmix64(x);
    x ^= c + 0xbf58476d1ce4e5b9ULL;
    return splitmix64(x);
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

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

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    // u1 in (0, 1] keeps the log finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    ++normal_count_;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

void Rng::fill_normal(std::vector<double>& out) {
    for (auto& v : out) v = normal();
}

Rng Rng::fork(std::uint64_t a, std::uint64_t b) const {
    return Rng(mix3(seed_, a, b));
}

std::array<std::uint64_t, 6> Rng::state() const {
    return {seed_, s_[0], s_[1], s_[2], s_[3], normal_count_};
}

Rng Rng::from_state(const std::array<std::uint64_t, 6>& st) {
    Rng r;
    r.seed_ = st[0];
    r.s_ = {st[1], st[2], st[3], st[4]};
    r.normal_count_ = st[5];
    return r;
}

}  // namespace ddgan
