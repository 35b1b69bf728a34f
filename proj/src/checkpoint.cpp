#include "ddgan/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace ddgan {

namespace {

constexpr char kMagic[8] = {'D', 'D', 'G', 'A', 'N', 'C', 'K', '1'};

void put_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(os, bits);
}

std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double get_f64(std::istream& is) {
    const std::uint64_t bits = get_u64(is);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

void put_string(std::ostream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    const std::uint64_t n = get_u64(is);
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    return s;
}

void put_array(std::ostream& os, const Checkpoint::Array& a, bool with_shape) {
    put_string(os, a.name);
    if (with_shape) {
        put_u64(os, a.shape.size());
        for (auto d : a.shape) put_u64(os, d);
    }
    put_u64(os, a.values.size());
    for (double v : a.values) put_f64(os, v);
}

Checkpoint::Array get_array(std::istream& is, bool with_shape) {
    Checkpoint::Array a;
    a.name = get_string(is);
    if (with_shape) {
        const std::uint64_t rank = get_u64(is);
        a.shape.resize(rank);
        for (auto& d : a.shape) d = get_u64(is);
    }
    a.values.resize(get_u64(is));
    for (auto& v : a.values) v = get_f64(is);
    return a;
}

}  // namespace

const Checkpoint::Array* Checkpoint::find_param(const std::string& name) const {
    for (const auto& a : params)
        if (a.name == name) return &a;
    return nullptr;
}

const Checkpoint::Array* Checkpoint::find_ema(const std::string& name) const {
    for (const auto& a : ema)
        if (a.name == name) return &a;
    return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot open " + path.string() + " for writing");
    os.write(kMagic, 8);
    put_u32(os, ckpt.version);
    put_string(os, ckpt.config_echo);
    put_u64(os, ckpt.params.size());
    for (const auto& a : ckpt.params) put_array(os, a, true);
    put_u64(os, ckpt.ema.size());
    for (const auto& a : ckpt.ema) put_array(os, a, false);
    for (auto w : ckpt.rng_state) put_u64(os, w);
    put_u64(os, ckpt.iteration);
    if (!os) throw IoError("checkpoint: write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw IoError("checkpoint: bad magic in " + path.string());
    Checkpoint ckpt;
    ckpt.version = get_u32(is);
    if (ckpt.version != 1)
        throw IoError("checkpoint: unsupported version " + std::to_string(ckpt.version));
    ckpt.config_echo = get_string(is);
    ckpt.params.resize(get_u64(is));
    for (auto& a : ckpt.params) a = get_array(is, true);
    ckpt.ema.resize(get_u64(is));
    for (auto& a : ckpt.ema) a = get_array(is, false);
    for (auto& w : ckpt.rng_state) w = get_u64(is);
    ckpt.iteration = get_u64(is);
    if (!is) throw IoError("checkpoint: truncated file " + path.string());
    return ckpt;
}

}  // namespace ddgan
