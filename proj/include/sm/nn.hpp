#pragma once

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "sm/autodiff.hpp"
#include "sm/params.hpp"

namespace sm::nn {

/// Vaswani-style sinusoidal position embedding; pe(t)[2i] = sin, [2i+1] = cos.
template <typename T>
Tensor<T> positional_encoding(std::size_t t0, std::size_t len, std::size_t d) {
    Tensor<T> pe({len, d});
    for (std::size_t r = 0; r < len; ++r) {
        double t = static_cast<double>(t0 + r);
        for (std::size_t i = 0; i < d; i += 2) {
            double freq = std::pow(10000.0, -static_cast<double>(i) / static_cast<double>(d));
            pe.data[r * d + i] = static_cast<T>(std::sin(t * freq));
            if (i + 1 < d) pe.data[r * d + i + 1] = static_cast<T>(std::cos(t * freq));
        }
    }
    return pe;
}

template <typename T>
struct Linear {
    Value<T> W, b;
    Linear() = default;
    Linear(ParamStore<T>& ps, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng)
        : W(ps.add(prefix + ".W", xavier_uniform<T>(in, out, rng))),
          b(ps.add(prefix + ".b", Tensor<T>::zeros({1, out}))) {}

    Value<T> operator()(const Value<T>& x) const { return add(matmul(x, W), b); }
};

template <typename T>
struct LayerNorm {
    Value<T> g, b;
    T eps = T(1e-5);
    LayerNorm() = default;
    LayerNorm(ParamStore<T>& ps, const std::string& prefix, std::size_t d, T eps_ = T(1e-5))
        : g(ps.add(prefix + ".g", Tensor<T>::full({1, d}, T(1)))), b(ps.add(prefix + ".b", Tensor<T>::zeros({1, d}))),
          eps(eps_) {}

    Value<T> operator()(const Value<T>& x) const { return layer_norm(x, g, b, eps); }
};

template <typename T>
struct MultiHeadAttention {
    Linear<T> wq, wk, wv, wo;
    std::size_t heads = 8;
    MultiHeadAttention() = default;
    MultiHeadAttention(ParamStore<T>& ps, const std::string& prefix, std::size_t d, std::size_t heads_, Rng& rng)
        : wq(ps, prefix + ".q", d, d, rng), wk(ps, prefix + ".k", d, d, rng), wv(ps, prefix + ".v", d, d, rng),
          wo(ps, prefix + ".o", d, d, rng), heads(heads_) {}

    /// q_in: (batch*fq) x d, kv_in: (batch*fkv) x d.
    Value<T> operator()(const Value<T>& q_in, const Value<T>& kv_in, std::size_t batch, std::size_t fq,
                        std::size_t fkv) const {
        auto ctx = mha_attention(wq(q_in), wk(kv_in), wv(kv_in), heads, batch, fq, fkv);
        return wo(ctx);
    }
};

template <typename T>
struct FeedForward {
    Linear<T> l1, l2;
    FeedForward() = default;
    FeedForward(ParamStore<T>& ps, const std::string& prefix, std::size_t d, std::size_t hidden, Rng& rng)
        : l1(ps, prefix + ".l1", d, hidden, rng), l2(ps, prefix + ".l2", hidden, d, rng) {}

    Value<T> operator()(const Value<T>& x) const { return l2(relu(l1(x))); }
};

/// Post-layer-norm transformer encoder layer (norm after residual).
template <typename T>
struct EncoderLayer {
    MultiHeadAttention<T> attn;
    FeedForward<T> ffn;
    LayerNorm<T> ln1, ln2;
    EncoderLayer() = default;
    EncoderLayer(ParamStore<T>& ps, const std::string& prefix, std::size_t d, std::size_t heads, std::size_t ffn_hidden,
                 Rng& rng)
        : attn(ps, prefix + ".attn", d, heads, rng), ffn(ps, prefix + ".ffn", d, ffn_hidden, rng),
          ln1(ps, prefix + ".ln1", d), ln2(ps, prefix + ".ln2", d) {}

    Value<T> operator()(const Value<T>& x, std::size_t batch, std::size_t f) const {
        auto h = ln1(add(x, attn(x, x, batch, f, f)));
        return ln2(add(h, ffn(h)));
    }
};

template <typename T>
struct TransformerEncoder {
    std::vector<EncoderLayer<T>> layers;
    TransformerEncoder() = default;
    TransformerEncoder(ParamStore<T>& ps, const std::string& prefix, std::size_t n_layers, std::size_t d,
                       std::size_t heads, std::size_t ffn_hidden, Rng& rng) {
        for (std::size_t i = 0; i < n_layers; ++i)
            layers.emplace_back(ps, prefix + ".layer" + std::to_string(i), d, heads, ffn_hidden, rng);
    }

    Value<T> operator()(Value<T> x, std::size_t batch, std::size_t f) const {
        for (auto& l : layers) x = l(x, batch, f);
        return x;
    }
};

/// Learned convex aggregation of per-token vectors into one clip vector:
/// s = softmax(w H) H^T, a convex combination of the token vectors.
template <typename T>
struct SelfAttentionPool {
    Value<T> w;  // 1 x d
    SelfAttentionPool() = default;
    SelfAttentionPool(ParamStore<T>& ps, const std::string& prefix, std::size_t d, Rng& rng)
        : w(ps.add(prefix + ".w", xavier_uniform<T>(d, 1, rng, {1, d}))) {}

    Value<T> operator()(const Value<T>& tokens) const {
        if (tokens.val().rows() < 1) throw ShapeError("self_attention_pool: empty sequence");
        auto logits = matmul(tokens, transpose(w));          // N x 1
        auto alpha = softmax_rows(transpose(logits));        // 1 x N
        return matmul(alpha, tokens);                        // 1 x d
    }

    /// Pooling weights for inspection/testing.
    Tensor<T> weights(const Value<T>& tokens) const {
        NoGradGuard ng;
        auto logits = matmul(tokens, transpose(w));
        return softmax_rows(transpose(logits)).val();
    }
};

/// Style-conditioned mixture of K expert feed-forward weight sets.
/// The mixture weights pi depend only on the style code; the mixed layer
/// pair is formed once per (style, clip) and applied to every token.
template <typename T>
struct AdaptiveFFN {
    std::size_t K = 8;
    std::vector<Value<T>> w1, b1, w2, b2;  // per expert
    Linear<T> attn1, attn2;                // style -> 64 -> K, then softmax

    struct Mixed {
        Value<T> W1, B1, W2, B2;
        Value<T> pi;  // 1 x K
    };

    AdaptiveFFN() = default;
    AdaptiveFFN(ParamStore<T>& ps, const std::string& prefix, std::size_t d, std::size_t hidden, std::size_t ds,
                std::size_t K_, std::size_t attn_hidden, Rng& rng)
        : K(K_), attn1(ps, prefix + ".attn1", ds, attn_hidden, rng), attn2(ps, prefix + ".attn2", attn_hidden, K_, rng) {
        // Experts are initialized independently so the mixture has signal
        // to differentiate between them.
        for (std::size_t k = 0; k < K; ++k) {
            auto sk = std::to_string(k);
            w1.push_back(ps.add(prefix + ".e" + sk + ".w1", xavier_uniform<T>(d, hidden, rng)));
            b1.push_back(ps.add(prefix + ".e" + sk + ".b1", Tensor<T>::zeros({1, hidden})));
            w2.push_back(ps.add(prefix + ".e" + sk + ".w2", xavier_uniform<T>(hidden, d, rng)));
            b2.push_back(ps.add(prefix + ".e" + sk + ".b2", Tensor<T>::zeros({1, d})));
        }
    }

    Value<T> gate(const Value<T>& style) const { return softmax_rows(attn2(relu(attn1(style)))); }

    Mixed mix(const Value<T>& style) const {
        Mixed m;
        m.pi = gate(style);
        for (std::size_t k = 0; k < K; ++k) {
            auto pk = slice_cols(m.pi, k, 1);  // 1 x 1 scalar
            auto addin = [&](Value<T>& acc, const Value<T>& expert) {
                auto term = mul(expert, pk);
                acc = acc.defined() ? add(acc, term) : term;
            };
            addin(m.W1, w1[k]);
            addin(m.B1, b1[k]);
            addin(m.W2, w2[k]);
            addin(m.B2, b2[k]);
        }
        return m;
    }

    Value<T> operator()(const Value<T>& x, const Mixed& m) const {
        return add(matmul(relu(add(matmul(x, m.W1), m.B1)), m.W2), m.B2);
    }
};

/// Transformer decoder layer: self-attention over the query tokens,
/// cross-attention to the key/value sequence, then either a plain or a
/// style-adaptive feed-forward sublayer. Post-layer-norm.
template <typename T>
struct DecoderLayer {
    MultiHeadAttention<T> self_attn, cross_attn;
    FeedForward<T> ffn;                      // used when adaptive is absent
    std::optional<AdaptiveFFN<T>> adaptive;  // style-aware variant
    LayerNorm<T> ln1, ln2, ln3;

    DecoderLayer() = default;
    DecoderLayer(ParamStore<T>& ps, const std::string& prefix, std::size_t d, std::size_t heads, std::size_t ffn_hidden,
                 Rng& rng, bool use_adaptive, std::size_t ds = 0, std::size_t K = 8, std::size_t attn_hidden = 64)
        : self_attn(ps, prefix + ".self", d, heads, rng), cross_attn(ps, prefix + ".cross", d, heads, rng),
          ln1(ps, prefix + ".ln1", d), ln2(ps, prefix + ".ln2", d), ln3(ps, prefix + ".ln3", d) {
        if (use_adaptive)
            adaptive.emplace(ps, prefix + ".affn", d, ffn_hidden, ds, K, attn_hidden, rng);
        else
            ffn = FeedForward<T>(ps, prefix + ".ffn", d, ffn_hidden, rng);
    }

    Value<T> operator()(const Value<T>& q, const Value<T>& kv, std::size_t batch, std::size_t fq, std::size_t fkv,
                        const typename AdaptiveFFN<T>::Mixed* mixed) const {
        auto h = ln1(add(q, self_attn(q, q, batch, fq, fq)));
        h = ln2(add(h, cross_attn(h, kv, batch, fq, fkv)));
        auto f = adaptive ? (*adaptive)(h, *mixed) : ffn(h);
        return ln3(add(h, f));
    }
};

// ---- segment-recurrent (memory-cached) decoder -------------------------

/// Per-layer rolling cache for the recurrent decoder. Holds the detached
/// token values plus their key/value projections; projections carry
/// gradient into the projection weights but not into earlier steps.
template <typename T>
struct XlLayerMemory {
    std::deque<Value<T>> tokens;  // detached inputs, each 1 x d
    std::deque<Value<T>> keys;
    std::deque<Value<T>> values;
};

template <typename T>
struct XlDecoderState {
    std::vector<XlLayerMemory<T>> layers;
    std::size_t step_index = 0;
};

/// Two-layer transformer with segment recurrence: each step attends over
/// (memory || current input) and the memory keeps the last `capacity`
/// layer inputs. Memory tokens are constants in backward.
template <typename T>
struct XlDecoder {
    std::vector<EncoderLayer<T>> layers;  // self-attention layers reused with external kv
    std::size_t capacity = 128;
    bool use_memory = true;  // sdt ablations disable the cache

    XlDecoder() = default;
    XlDecoder(ParamStore<T>& ps, const std::string& prefix, std::size_t n_layers, std::size_t d, std::size_t heads,
              std::size_t ffn_hidden, std::size_t capacity_, Rng& rng)
        : capacity(capacity_) {
        for (std::size_t i = 0; i < n_layers; ++i)
            layers.emplace_back(ps, prefix + ".layer" + std::to_string(i), d, heads, ffn_hidden, rng);
    }

    XlDecoderState<T> make_state() const {
        XlDecoderState<T> st;
        st.layers.resize(layers.size());
        return st;
    }

    /// One recurrent step. Returns the last layer's output token (1 x d).
    Value<T> step(XlDecoderState<T>& st, const Value<T>& fused_input) const {
        Value<T> x = fused_input;
        for (std::size_t li = 0; li < layers.size(); ++li) {
            auto& layer = layers[li];
            auto& mem = st.layers[li];
            Value<T> attn_out;
            std::size_t fkv = 1 + (use_memory ? mem.tokens.size() : 0);
            auto q = layer.attn.wq(x);
            auto k_new = layer.attn.wk(x);
            auto v_new = layer.attn.wv(x);
            Value<T> k_all = k_new, v_all = v_new;
            if (use_memory && !mem.tokens.empty()) {
                std::vector<Value<T>> ks(mem.keys.begin(), mem.keys.end());
                std::vector<Value<T>> vs(mem.values.begin(), mem.values.end());
                ks.push_back(k_new);
                vs.push_back(v_new);
                k_all = concat_rows(ks);
                v_all = concat_rows(vs);
            }
            attn_out = layer.attn.wo(mha_attention(q, k_all, v_all, layer.attn.heads, 1, 1, fkv));
            if (use_memory) {
                auto xd = x.detach();
                mem.tokens.push_back(xd);
                mem.keys.push_back(layer.attn.wk(xd));
                mem.values.push_back(layer.attn.wv(xd));
                while (mem.tokens.size() > capacity) {
                    mem.tokens.pop_front();
                    mem.keys.pop_front();
                    mem.values.pop_front();
                }
            }
            auto h = layer.ln1(add(x, attn_out));
            x = layer.ln2(add(h, layer.ffn(h)));
        }
        ++st.step_index;
        return x;
    }
};

/// 1-D temporal window discriminator following the 70x70 PatchGAN recipe
/// collapsed to one dimension: three stride-2 and two stride-1 convolutions
/// with kernel 4 give a 70-frame receptive field and one real-valued score
/// per window (no output squashing; LSGAN form).
template <typename T>
struct PatchDisc1D {
    static constexpr std::size_t kReceptiveField = 70;
    std::vector<Value<T>> ws, bs;
    std::vector<std::size_t> strides;

    PatchDisc1D() = default;
    PatchDisc1D(ParamStore<T>& ps, const std::string& prefix, std::size_t in_channels, Rng& rng,
                std::vector<std::size_t> widths = {64, 128, 256, 256}) {
        std::size_t cin = in_channels;
        std::vector<std::size_t> chans = widths;
        chans.push_back(1);
        for (std::size_t i = 0; i < chans.size(); ++i) {
            std::size_t cout = chans[i];
            std::size_t k = 4;
            ws.push_back(ps.add(prefix + ".conv" + std::to_string(i) + ".w",
                                xavier_uniform<T>(cin * k, cout * k, rng, {cout, cin, k})));
            bs.push_back(ps.add(prefix + ".conv" + std::to_string(i) + ".b", Tensor<T>::zeros({1, cout})));
            strides.push_back(i < 3 ? 2 : 1);
            cin = cout;
        }
    }

    /// x: channels x T with T >= 70. Returns the 1 x n_windows score map.
    Value<T> operator()(Value<T> x) const {
        if (x.val().cols() < kReceptiveField)
            throw ShapeError("discriminator input shorter than receptive field: " + shape_str(x.val().shape));
        for (std::size_t i = 0; i < ws.size(); ++i) {
            x = conv1d(x, ws[i], bs[i], strides[i]);
            if (i + 1 < ws.size()) x = leaky_relu(x, T(0.2));
        }
        return x;
    }

    static std::size_t score_len(std::size_t t) {
        for (int i = 0; i < 3; ++i) t = (t - 4) / 2 + 1;
        t = t - 3;
        t = t - 3;
        return t;
    }
};

/// Mean squared distance of a score map to a constant LSGAN target.
template <typename T>
Value<T> lsgan_target_loss(const Value<T>& scores, T target) {
    auto d = add_const(scores, -target);
    return mean_all(mul(d, d));
}

/// Shared per-point MLP + max-pool point-set encoder (mouth embedding).
template <typename T>
struct PointSetEncoder {
    Linear<T> p1, p2, head;
    PointSetEncoder() = default;
    PointSetEncoder(ParamStore<T>& ps, const std::string& prefix, std::size_t in_dim, std::size_t h1, std::size_t out,
                    Rng& rng)
        : p1(ps, prefix + ".p1", in_dim, h1, rng), p2(ps, prefix + ".p2", h1, out, rng),
          head(ps, prefix + ".head", out, out, rng) {}

    /// points: N x in_dim -> 1 x out.
    Value<T> operator()(const Value<T>& points) const {
        auto f = relu(p2(relu(p1(points))));
        return head(col_max(f));
    }
};

}  // namespace sm::nn
