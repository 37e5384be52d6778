#include "sm/io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sm {

namespace {
constexpr char kMagic[4] = {'M', 'T', 'F', '1'};
}

void write_mtf_raw(const std::filesystem::path& path, std::uint8_t dtype, const std::vector<std::size_t>& shape,
                   const void* payload, std::size_t payload_bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open for writing: " + path.string());
    f.write(kMagic, 4);
    f.put(static_cast<char>(dtype));
    if (shape.size() > 255) throw ShapeError("MTF rank limit exceeded");
    f.put(static_cast<char>(shape.size()));
    for (auto e : shape) {
        if (e > UINT32_MAX) throw ShapeError("MTF extent limit exceeded");
        std::uint32_t le = static_cast<std::uint32_t>(e);
        f.write(reinterpret_cast<const char*>(&le), 4);
    }
    f.write(static_cast<const char*>(payload), static_cast<std::streamsize>(payload_bytes));
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

void read_mtf_raw(const std::filesystem::path& path, std::uint8_t expected_dtype, std::vector<std::size_t>& shape,
                  std::vector<std::uint8_t>& payload) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for reading: " + path.string());
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("not an MTF file: " + path.string());
    int dtype = f.get();
    int rank = f.get();
    if (dtype < 0 || rank < 0) throw std::runtime_error("truncated MTF header: " + path.string());
    if (dtype != expected_dtype)
        throw std::runtime_error("MTF dtype mismatch in " + path.string() + ": expected " +
                                 std::to_string(int(expected_dtype)) + ", got " + std::to_string(dtype));
    shape.clear();
    std::size_t numel = 1;
    for (int i = 0; i < rank; ++i) {
        std::uint32_t le;
        f.read(reinterpret_cast<char*>(&le), 4);
        if (!f) throw std::runtime_error("truncated MTF extents: " + path.string());
        shape.push_back(le);
        numel *= le;
    }
    std::size_t esize = dtype == 1 ? 8 : 4;
    payload.resize(numel * esize);
    f.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!f) throw std::runtime_error("truncated MTF payload: " + path.string());
}

}  // namespace sm
