#pragma once

#include "sm/config.hpp"
#include "sm/face.hpp"
#include "sm/nn.hpp"
#include "sm/pose.hpp"

namespace sm::expr {

template <typename T>
Value<T> vabs(const Value<T>& x) {
    return add(relu(x), relu(neg(x)));
}

// ---- style-as-query decoder ---------------------------------------------

/// E_d^delta: per frame, the style code (repeated 2w+1 times with positional
/// encodings) queries the phoneme window p'_{t-w:t+w}; the middle output
/// token feeds the lower (13) and upper (51) heads. Frames are batched along
/// the row axis. The feed-forward sublayers are style-adaptive mixtures.
template <typename T>
struct ExprDecoder {
    nn::Linear<T> style_proj;
    std::vector<nn::DecoderLayer<T>> lower_layers, upper_layers;
    nn::Linear<T> lower_head, upper_head;
    std::size_t w = 5, d = 0, lower_dim = 13, upper_dim = 51;
    std::vector<std::size_t> mouth_cols;  // output columns written by the lower head

    ExprDecoder() = default;
    ExprDecoder(ParamStore<T>& ps, const std::string& prefix, const ModelConfig& m,
                std::vector<std::size_t> mouth_cols_, Rng& rng)
        : style_proj(ps, prefix + ".sproj", m.hidden, m.hidden, rng),
          lower_head(ps, prefix + ".lower_head", m.hidden, m.lower_dim, rng),
          upper_head(ps, prefix + ".upper_head", m.hidden, m.upper_dim, rng), w(m.context_half_window), d(m.hidden),
          lower_dim(m.lower_dim), upper_dim(m.upper_dim), mouth_cols(std::move(mouth_cols_)) {
        if (mouth_cols.size() != lower_dim) throw std::invalid_argument("mouth column set must have lower_dim entries");
        for (std::size_t i = 0; i < m.expr_dec_layers; ++i) {
            lower_layers.emplace_back(ps, prefix + ".lo" + std::to_string(i), m.hidden, m.heads, m.adaptive_hidden, rng,
                                      /*use_adaptive=*/true, m.style_dim, m.experts, m.expert_attn_hidden);
            upper_layers.emplace_back(ps, prefix + ".up" + std::to_string(i), m.hidden, m.heads, m.adaptive_hidden, rng,
                                      /*use_adaptive=*/true, m.style_dim, m.experts, m.expert_attn_hidden);
        }
    }

    /// p_latent: T x d phoneme latents, s: 1 x d style code -> T x 64.
    Value<T> operator()(const Value<T>& p_latent, const Value<T>& s) const {
        const std::size_t Tlen = p_latent.val().rows();
        const std::size_t win = 2 * w + 1;

        // Query block (shared by every frame): projected style + positional
        // encodings over the window slots.
        auto qblock = add(Value<T>(nn::positional_encoding<T>(0, win, d)), style_proj(s));
        std::vector<Value<T>> qcopies(Tlen, qblock);
        auto q = concat_rows(qcopies);  // (T*win) x d

        // Key/value: replicate-padded phoneme windows gathered in one shot.
        Tensor<std::int32_t> idx({Tlen * win});
        for (std::size_t t = 0; t < Tlen; ++t)
            for (std::size_t j = 0; j < win; ++j) {
                const long raw = static_cast<long>(t) + static_cast<long>(j) - static_cast<long>(w);
                const long cl = std::min<long>(std::max<long>(raw, 0), static_cast<long>(Tlen) - 1);
                idx.data[t * win + j] = static_cast<std::int32_t>(cl);
            }
        auto kv = embedding(p_latent, idx);  // (T*win) x d

        auto run = [&](const std::vector<nn::DecoderLayer<T>>& layers) {
            Value<T> x = q;
            for (auto& layer : layers) {
                auto mixed = layer.adaptive->mix(s);
                x = layer(x, kv, Tlen, win, win, &mixed);
            }
            return x;
        };
        // Middle token of every frame.
        Tensor<std::int32_t> mid({Tlen});
        for (std::size_t t = 0; t < Tlen; ++t) mid.data[t] = static_cast<std::int32_t>(t * win + w);

        auto lower = lower_head(embedding(run(lower_layers), mid));  // T x 13
        auto upper = upper_head(embedding(run(upper_layers), mid));  // T x 51

        // Scatter into the configured 64-column layout.
        std::vector<char> is_mouth(lower_dim + upper_dim, 0);
        for (auto c : mouth_cols) is_mouth[c] = 1;
        Tensor<std::int32_t> perm({lower_dim + upper_dim});
        std::size_t lo = 0;
        std::vector<std::size_t> lower_pos(lower_dim + upper_dim, 0);
        for (auto c : mouth_cols) lower_pos[c] = lo++;
        std::size_t next_up = 0;
        for (std::size_t c = 0; c < lower_dim + upper_dim; ++c)
            perm.data[c] = static_cast<std::int32_t>(is_mouth[c] ? lower_pos[c] : lower_dim + next_up++);
        auto cat = concat_cols<T>({lower, upper});  // T x 64, lower-first layout
        return transpose(embedding(transpose(cat), perm));
    }
};

// ---- reconstruction (Eq. 14) --------------------------------------------

template <typename T>
Value<T> expr_recon_loss(const Value<T>& d_ref, const Value<T>& d_hat, T mu, T c1, T c2) {
    if (d_ref.val().shape != d_hat.val().shape) throw ShapeError("expr_recon_loss: shape mismatch");
    auto l1 = mean_all(vabs(sub(d_ref, d_hat)));
    auto dssim = pose::ssim_loss(d_ref, d_hat, c1, c2);
    return add(scale(l1, mu), scale(dssim, T(1) - mu));
}

// ---- sync discriminator (Eq. 15-16) -------------------------------------

/// max(x, eps), differentiable above eps.
template <typename T>
Value<T> clamp_min(const Value<T>& x, T eps) {
    return add_const(relu(add_const(x, -eps)), eps);
}

template <typename T>
Value<T> cosine_similarity(const Value<T>& a, const Value<T>& b, T eps = T(1e-8)) {
    auto dot = sum_all(mul(a, b));
    auto na = vsqrt(add_const(sum_all(mul(a, a)), T(1e-20)));
    auto nb = vsqrt(add_const(sum_all(mul(b, b)), T(1e-20)));
    return divv(dot, clamp_min(mul(na, nb), eps));
}

/// Mouth point-set encoder vs phoneme window encoder; synchrony is their
/// cosine similarity.
template <typename T>
struct SyncDiscriminator {
    nn::PointSetEncoder<T> mouth_enc;  // 3 -> 64 -> 128, head 128 -> 128
    Value<T> ph_embed;                 // vocab x 32
    nn::Linear<T> ph_l1, ph_l2;
    std::size_t window = 5;

    SyncDiscriminator() = default;
    SyncDiscriminator(ParamStore<T>& ps, const std::string& prefix, const ModelConfig& m, Rng& rng)
        : mouth_enc(ps, prefix + ".mouth", 3, 64, m.sync_embed, rng),
          ph_embed(ps.add(prefix + ".ph_embed", normal_init<T>({m.phoneme_vocab, 32}, 0.05, rng))),
          ph_l1(ps, prefix + ".ph_l1", m.sync_window * 32, m.sync_embed, rng),
          ph_l2(ps, prefix + ".ph_l2", m.sync_embed, m.sync_embed, rng), window(m.sync_window) {}

    /// points: n_mouth x 3 -> 1 x embed.
    Value<T> encode_mouth(const Value<T>& points) const { return mouth_enc(points); }

    /// labels: `window` phoneme ids -> 1 x embed.
    Value<T> encode_phonemes(const Tensor<std::int32_t>& labels) const {
        if (labels.numel() != window) throw ShapeError("phoneme window must have " + std::to_string(window) + " labels");
        auto e = embedding(ph_embed, labels);  // window x 32
        auto flat = reshape(e, {std::size_t(1), window * 32});
        return ph_l2(relu(ph_l1(flat)));
    }

    Value<T> probability(const Value<T>& mouth_points, const Tensor<std::int32_t>& labels) const {
        return cosine_similarity(encode_mouth(mouth_points), encode_phonemes(labels));
    }
};

/// Constant mouth geometry used by the sync loss: flattened restriction of
/// the face basis to the mouth rows (see face::FaceBasis::mouth_restriction).
template <typename T>
struct MouthGeometry {
    Tensor<T> basis;  // expr_dim x 3m (transposed restriction)
    Tensor<T> mean;   // 1 x 3m
    std::size_t points = 0;

    static MouthGeometry from_basis(const face::FaceBasis& fb) {
        TensorF mm, mb;
        fb.mouth_restriction(mm, mb);
        MouthGeometry g;
        g.points = fb.mouth_index.numel();
        const std::size_t rows = mb.shape[0], cols = mb.shape[1];
        g.basis = Tensor<T>({cols, rows});
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) g.basis.at(c, r) = static_cast<T>(mb.at(r, c));
        g.mean = Tensor<T>({std::size_t(1), rows});
        for (std::size_t r = 0; r < rows; ++r) g.mean.data[r] = static_cast<T>(mm.data[r]);
        return g;
    }
};

/// Eq. 16: mean over frames of -log(clamp(P_sync, 1e-7, 1)); mouth points
/// come from the affine model applied to each frame's coefficients.
template <typename T>
Value<T> sync_loss(const Value<T>& clip, const Tensor<std::int32_t>& phonemes, const MouthGeometry<T>& geom,
                   const SyncDiscriminator<T>& disc) {
    const std::size_t L = clip.val().rows();
    if (phonemes.numel() != L) throw ShapeError("sync_loss: phoneme/clip length mismatch");
    const auto half = static_cast<long>(disc.window / 2);
    // All frames' mouth displacements in one product: L x 3m. The constant
    // mean geometry carries no synchrony information and dwarfs the per-frame
    // displacement, so the discriminator sees displacements only (matching
    // the pretraining input).
    auto pts_flat = matmul(clip, Value<T>(geom.basis));
    Value<T> total;
    for (std::size_t t = 0; t < L; ++t) {
        Tensor<std::int32_t> win({disc.window});
        for (long j = 0; j < static_cast<long>(disc.window); ++j) {
            long raw = static_cast<long>(t) + j - half;
            win.data[static_cast<std::size_t>(j)] =
                phonemes.data[static_cast<std::size_t>(std::min<long>(std::max<long>(raw, 0), static_cast<long>(L) - 1))];
        }
        auto pts = reshape(slice_rows(pts_flat, t, 1), {geom.points, std::size_t(3)});
        auto p = clampv(disc.probability(pts, win), T(1e-7), T(1));
        auto term = neg(vlog(p));
        total = total.defined() ? add(total, term) : term;
    }
    return scale(total, T(1) / static_cast<T>(L));
}

// ---- style classifier (Eq. 17) ------------------------------------------

template <typename T>
struct StyleClassifier {
    std::vector<Value<T>> ws, bs;
    nn::Linear<T> out;
    std::size_t classes = 0;

    StyleClassifier() = default;
    StyleClassifier(ParamStore<T>& ps, const std::string& prefix, std::size_t in_channels, std::size_t n_classes,
                    Rng& rng, std::size_t width = 128)
        : out(ps, prefix + ".out", width, n_classes, rng), classes(n_classes) {
        std::size_t cin = in_channels;
        for (int i = 0; i < 3; ++i) {
            ws.push_back(ps.add(prefix + ".conv" + std::to_string(i) + ".w",
                                xavier_uniform<T>(cin * 4, width * 4, rng, {width, cin, 4})));
            bs.push_back(ps.add(prefix + ".conv" + std::to_string(i) + ".b", Tensor<T>::zeros({1, width})));
            cin = width;
        }
    }

    /// Shortest clip the three stride-2 convolutions can reduce.
    static constexpr std::size_t kMinLen = 22;

    /// clip: T x 64 -> 1 x classes logits. Clips shorter than kMinLen are
    /// edge-replicated so the convolution stack stays valid.
    Value<T> logits(const Value<T>& clip) const {
        Value<T> padded = clip;
        if (clip.val().rows() < kMinLen) {
            std::vector<Value<T>> parts = {clip};
            auto last = slice_rows(clip, clip.val().rows() - 1, 1);
            for (std::size_t i = clip.val().rows(); i < kMinLen; ++i) parts.push_back(last);
            padded = concat_rows(parts);
        }
        auto x = transpose(padded);
        for (std::size_t i = 0; i < ws.size(); ++i) x = relu(conv1d(x, ws[i], bs[i], 2));
        return out(transpose(row_mean(x)));
    }

    Value<T> probabilities(const Value<T>& clip) const { return softmax_rows(logits(clip)); }
};

/// -log P^s_{true_class}.
template <typename T>
Value<T> expr_style_loss(const StyleClassifier<T>& clf, const Value<T>& clip, std::size_t true_class) {
    if (true_class >= clf.classes) throw std::out_of_range("style class out of range");
    auto p = clf.probabilities(clip);
    return neg(vlog(clampv(slice_cols(p, true_class, 1), T(1e-12), T(1))));
}

/// Eq. 18 weighted total.
template <typename T>
Value<T> expr_total_loss(const LossConfig& w, const Value<T>& rec, const Value<T>& trip, const Value<T>& sync,
                         const Value<T>& tem, const Value<T>& style) {
    auto total = scale(rec, T(w.lambda_d_rec));
    total = add(total, scale(trip, T(w.lambda_d_trip)));
    total = add(total, scale(sync, T(w.lambda_d_sync)));
    total = add(total, scale(tem, T(w.lambda_d_tem)));
    total = add(total, scale(style, T(w.lambda_d_style)));
    return total;
}

}  // namespace sm::expr
