#include "sm/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sm {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("checkpoint truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_tensor(std::ostream& os, const TensorF& t) {
    put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape) put_u32(os, static_cast<std::uint32_t>(e));
    os.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
}

TensorF get_tensor(std::istream& is) {
    const std::uint32_t rank = get_u32(is);
    if (rank > 8) throw std::runtime_error("checkpoint tensor rank implausible");
    std::vector<std::size_t> shape(rank);
    for (auto& e : shape) e = get_u32(is);
    TensorF t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint truncated");
    return t;
}

void put_string(std::ostream& os, const std::string& s) {
    put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
    const std::uint32_t n = get_u32(is);
    std::string s(n, '\0');
    is.read(s.data(), n);
    if (!is) throw std::runtime_error("checkpoint truncated");
    return s;
}

}  // namespace

void Checkpoint::save(const std::filesystem::path& file) const {
    std::ofstream os(file, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + file.string());
    os.write("CKPT", 4);
    put_u32(os, static_cast<std::uint32_t>(epoch));
    put_string(os, rng_state);
    put_string(os, config_json);
    put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_string(os, name);
        put_tensor(os, t);
    }
    put_u32(os, static_cast<std::uint32_t>(scalars.size()));
    for (const auto& [name, v] : scalars) {
        put_string(os, name);
        os.write(reinterpret_cast<const char*>(&v), sizeof(double));
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + file.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + file.string());
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "CKPT", 4) != 0) throw std::runtime_error("bad checkpoint magic");
    Checkpoint ck;
    ck.epoch = get_u32(is);
    ck.rng_state = get_string(is);
    ck.config_json = get_string(is);
    const std::uint32_t nt = get_u32(is);
    for (std::uint32_t i = 0; i < nt; ++i) {
        std::string name = get_string(is);
        ck.tensors.emplace(std::move(name), get_tensor(is));
    }
    const std::uint32_t ns = get_u32(is);
    for (std::uint32_t i = 0; i < ns; ++i) {
        std::string name = get_string(is);
        double v;
        is.read(reinterpret_cast<char*>(&v), sizeof(double));
        if (!is) throw std::runtime_error("checkpoint truncated");
        ck.scalars.emplace(std::move(name), v);
    }
    return ck;
}

}  // namespace sm
