#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ddgan/tensor.hpp"

namespace ddgan {

// Versioned training snapshot.
//
// Byte layout (little-endian throughout):
//   magic   8 bytes        "DDGANCK1"
//   version u32            currently 1
//   config  u64 len, bytes flat key=value config echo
//   params  u64 count, then per entry:
//             u64 name len, name bytes,
//             u64 rank, u64 dims[rank],
//             u64 value count, f64 values (raw IEEE-754 bits)
//   ema     u64 count, then per entry:
//             u64 name len, name bytes, u64 value count, f64 values
//   rng     6 x u64        root stream state
//   iter    u64
//
// Round trips are bit-exact: doubles are written as raw bits.
struct Checkpoint {
    std::uint32_t version = 1;
    std::string config_echo;
    struct Array {
        std::string name;
        Shape shape;
        std::vector<double> values;
    };
    std::vector<Array> params;
    std::vector<Array> ema;  // shapes mirror the matching param entries
    std::array<std::uint64_t, 6> rng_state{};
    std::uint64_t iteration = 0;

    const Array* find_param(const std::string& name) const;
    const Array* find_ema(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ddgan
