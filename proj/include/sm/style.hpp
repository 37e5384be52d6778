#pragma once

#include "sm/config.hpp"
#include "sm/nn.hpp"

namespace sm::style {

/// Euclidean distance between two 1 x d codes, kept differentiable.
/// The small epsilon under the root keeps the gradient finite at 0.
template <typename T>
Value<T> code_distance(const Value<T>& a, const Value<T>& b) {
    auto d = sub(a, b);
    return vsqrt(add_const(sum_all(mul(d, d)), T(1e-12)));
}

/// max{ ||s_a - s_p|| - ||s_a - s_n|| + gamma, 0 }.
template <typename T>
Value<T> triplet_loss(const Value<T>& s_a, const Value<T>& s_p, const Value<T>& s_n, T gamma) {
    auto margin = add_const(sub(code_distance(s_a, s_p), code_distance(s_a, s_n)), gamma);
    return relu(margin);
}

/// (1 - alpha) s1 + alpha s2 on raw code tensors (inference-side).
template <typename T>
Tensor<T> interpolate_styles(const Tensor<T>& s1, const Tensor<T>& s2, double alpha) {
    if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("interpolation alpha must be in [0,1]");
    if (s1.shape != s2.shape) throw ShapeError("style codes must share shape");
    Tensor<T> out = s1;
    for (std::size_t i = 0; i < out.numel(); ++i)
        out.data[i] = static_cast<T>((1.0 - alpha) * s1.data[i] + alpha * s2.data[i]);
    return out;
}

/// Universal style encoder E_s: input projection, positionally-encoded
/// transformer stack, self-attention pooling to one clip code. One
/// parameter set per flavor (expression 64-d in, pose 6-d in).
template <typename T>
struct StyleEncoder {
    nn::Linear<T> in_proj;
    nn::TransformerEncoder<T> enc;
    nn::SelfAttentionPool<T> pool;
    std::size_t in_dim = 0, d = 0;
    std::size_t len_lo = 0, len_hi = 0;  // admissible clip range (soft at inference)

    StyleEncoder() = default;
    StyleEncoder(ParamStore<T>& ps, const std::string& prefix, std::size_t in_dim_, const ModelConfig& m,
                 std::size_t len_lo_, std::size_t len_hi_, Rng& rng)
        : in_proj(ps, prefix + ".in", in_dim_, m.hidden, rng),
          enc(ps, prefix + ".enc", m.enc_layers, m.hidden, m.heads, m.ffn_hidden, rng),
          pool(ps, prefix + ".pool", m.hidden, rng), in_dim(in_dim_), d(m.hidden), len_lo(len_lo_), len_hi(len_hi_) {}

    /// seq: N x in_dim -> 1 x d style code.
    Value<T> operator()(const Value<T>& seq) const {
        if (seq.val().cols() != in_dim)
            throw ShapeError("style encoder expects width " + std::to_string(in_dim) + ", got " +
                             shape_str(seq.val().shape));
        const std::size_t N = seq.val().rows();
        Value<T> pe(nn::positional_encoding<T>(0, N, d));
        auto x = add(in_proj(seq), pe);
        return pool(enc(x, 1, N));
    }

    bool length_in_range(std::size_t n) const { return n >= len_lo && n <= len_hi; }
};

}  // namespace sm::style
