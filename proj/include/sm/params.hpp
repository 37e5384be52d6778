#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>

#include "sm/autodiff.hpp"
#include "sm/rng.hpp"

namespace sm {

/// Named trainable tensors. Modules register parameters under a prefix at
/// construction; the optimizer and the checkpoint writer iterate the map
/// (std::map keeps the order deterministic).
template <typename T>
class ParamStore {
public:
    Value<T> add(const std::string& name, Tensor<T> init) {
        if (params_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
        Value<T> v(std::move(init), /*requires_grad=*/true);
        // Parameters must be leaves even if created under NoGrad.
        v.node()->needs_grad = true;
        params_.emplace(name, v);
        return v;
    }

    Value<T>& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
        return it->second;
    }

    const std::map<std::string, Value<T>>& all() const { return params_; }
    std::map<std::string, Value<T>>& all() { return params_; }

    void zero_grad() {
        for (auto& [k, v] : params_) v.zero_grad();
    }

    void freeze() {
        for (auto& [k, v] : params_) v.node()->needs_grad = false;
    }

    std::size_t count() const { return params_.size(); }

private:
    std::map<std::string, Value<T>> params_;
};

// Xavier-uniform init for projections, zero for biases.
template <typename T>
Tensor<T> xavier_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng, std::vector<std::size_t> shape = {}) {
    if (shape.empty()) shape = {fan_in, fan_out};
    Tensor<T> t(shape);
    double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-limit, limit));
    return t;
}

template <typename T>
Tensor<T> normal_init(std::vector<std::size_t> shape, double stddev, Rng& rng) {
    Tensor<T> t(std::move(shape));
    for (auto& v : t.data) v = static_cast<T>(rng.normal(0.0, stddev));
    return t;
}

}  // namespace sm
