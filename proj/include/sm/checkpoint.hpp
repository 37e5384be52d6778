#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "sm/tensor.hpp"

namespace sm {

/// Binary snapshot of a training run. Layout: "CKPT" | u32 epoch |
/// rng-state string | config JSON string | named f32 tensors | named
/// doubles. Strings and counts are little-endian u32 length-prefixed.
/// Save -> load -> save is byte-identical, which the determinism
/// acceptance check relies on.
struct Checkpoint {
    std::size_t epoch = 0;
    std::string rng_state;
    std::string config_json;
    std::map<std::string, TensorF> tensors;  // parameters + optimizer moments
    std::map<std::string, double> scalars;   // step counts, schedule state

    void save(const std::filesystem::path& file) const;
    static Checkpoint load(const std::filesystem::path& file);
};

}  // namespace sm
