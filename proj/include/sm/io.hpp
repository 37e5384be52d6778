#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>

#include "sm/tensor.hpp"

namespace sm {

/// MTF container: magic "MTF1" | u8 dtype (0=f32, 1=f64, 2=i32) | u8 rank |
/// little-endian u32 extents[rank] | raw row-major payload.
/// All sequence, feature, and weight files use this container.

template <typename T>
struct mtf_dtype;
template <>
struct mtf_dtype<float> {
    static constexpr std::uint8_t value = 0;
};
template <>
struct mtf_dtype<double> {
    static constexpr std::uint8_t value = 1;
};
template <>
struct mtf_dtype<std::int32_t> {
    static constexpr std::uint8_t value = 2;
};

void write_mtf_raw(const std::filesystem::path& path, std::uint8_t dtype, const std::vector<std::size_t>& shape,
                   const void* payload, std::size_t payload_bytes);
void read_mtf_raw(const std::filesystem::path& path, std::uint8_t expected_dtype, std::vector<std::size_t>& shape,
                  std::vector<std::uint8_t>& payload);

template <typename T>
void write_mtf(const std::filesystem::path& path, const Tensor<T>& t) {
    write_mtf_raw(path, mtf_dtype<T>::value, t.shape, t.data.data(), t.data.size() * sizeof(T));
}

template <typename T>
Tensor<T> read_mtf(const std::filesystem::path& path) {
    std::vector<std::size_t> shape;
    std::vector<std::uint8_t> payload;
    read_mtf_raw(path, mtf_dtype<T>::value, shape, payload);
    Tensor<T> t;
    t.shape = std::move(shape);
    t.data.resize(payload.size() / sizeof(T));
    std::memcpy(t.data.data(), payload.data(), payload.size());
    return t;
}

}  // namespace sm
