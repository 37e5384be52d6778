#pragma once

#include "sm/config.hpp"
#include "sm/nn.hpp"
#include "sm/style.hpp"

namespace sm::pose {

// ---- SSIM (whole-array statistics, Eq. 6 convention) --------------------

/// SSIM with global mean/std/covariance over the full arrays; population
/// statistics, constants c1/c2 against a unit dynamic range.
template <typename T>
Value<T> ssim_value(const Value<T>& a, const Value<T>& b, T c1, T c2) {
    if (a.val().shape != b.val().shape) throw ShapeError("ssim: shape mismatch");
    auto m1 = mean_all(a), m2 = mean_all(b);
    auto v1 = sub(mean_all(mul(a, a)), mul(m1, m1));
    auto v2 = sub(mean_all(mul(b, b)), mul(m2, m2));
    auto cov = sub(mean_all(mul(a, b)), mul(m1, m2));
    auto num = mul(add_const(scale(mul(m1, m2), T(2)), c1), add_const(scale(cov, T(2)), c2));
    auto den = mul(add_const(add(mul(m1, m1), mul(m2, m2)), c1), add_const(add(v1, v2), c2));
    return divv(num, den);
}

template <typename T>
Value<T> ssim_loss(const Value<T>& a, const Value<T>& b, T c1, T c2) {
    return add_const(neg(ssim_value(a, b, c1, c2)), T(1));
}

// ---- sequence input encoder ---------------------------------------------

/// Per-frame sequence encoder shared by the acoustic path and the phoneme
/// ablation: project (or embed) each frame, add positional encodings, run
/// the transformer stack. Output T x hidden.
template <typename T>
struct SeqEncoder {
    nn::Linear<T> in_proj;     // dense inputs
    Value<T> embed;            // label inputs (vocab x hidden); undefined if dense
    nn::TransformerEncoder<T> enc;
    std::size_t in_dim = 0, d = 0;

    SeqEncoder() = default;
    /// Dense variant (acoustic features).
    SeqEncoder(ParamStore<T>& ps, const std::string& prefix, std::size_t in_dim_, const ModelConfig& m, Rng& rng)
        : in_proj(ps, prefix + ".in", in_dim_, m.hidden, rng),
          enc(ps, prefix + ".enc", m.enc_layers, m.hidden, m.heads, m.ffn_hidden, rng), in_dim(in_dim_), d(m.hidden) {}
    /// Label variant (phoneme input ablation / expression branch front end).
    SeqEncoder(ParamStore<T>& ps, const std::string& prefix, std::size_t vocab, std::size_t /*tag*/,
               const ModelConfig& m, Rng& rng)
        : embed(ps.add(prefix + ".embed", normal_init<T>({vocab, m.hidden}, 0.02, rng))),
          enc(ps, prefix + ".enc", m.enc_layers, m.hidden, m.heads, m.ffn_hidden, rng), in_dim(0), d(m.hidden) {}

    Value<T> operator()(const Value<T>& seq) const {
        if (seq.val().cols() != in_dim)
            throw ShapeError("encoder expects width " + std::to_string(in_dim) + ", got " +
                             shape_str(seq.val().shape));
        const std::size_t N = seq.val().rows();
        auto x = add(in_proj(seq), Value<T>(nn::positional_encoding<T>(0, N, d)));
        return enc(x, 1, N);
    }

    Value<T> operator()(const Tensor<std::int32_t>& labels) const {
        const std::size_t N = labels.numel();
        auto x = add(embedding(embed, labels), Value<T>(nn::positional_encoding<T>(0, N, d)));
        return enc(x, 1, N);
    }
};

// ---- recurrent pose decoder ---------------------------------------------

/// E_d^h: init-pose network, fuse projection, segment-recurrent decoder,
/// linear output head. Variants: "xl" (memory), "sdt-tf" (no memory,
/// teacher-forced previous embedding), "sdt-rr" (no memory, own outputs).
template <typename T>
struct PoseDecoder {
    std::vector<nn::Linear<T>> init_net;  // 6 -> d -> d -> d -> d
    nn::Linear<T> fuse;                   // (d_latent + d + d) -> d
    nn::XlDecoder<T> xl;
    nn::Linear<T> head;  // d -> 6
    std::size_t d = 0, pose_dim = 6;
    bool use_set = true;
    std::string variant = "xl";

    PoseDecoder() = default;
    PoseDecoder(ParamStore<T>& ps, const std::string& prefix, const ModelConfig& m, Rng& rng)
        : fuse(ps, prefix + ".fuse", 3 * m.hidden, m.hidden, rng),
          xl(ps, prefix + ".xl", m.pose_dec_layers, m.hidden, m.heads, m.ffn_hidden, m.memory, rng),
          head(ps, prefix + ".head", m.hidden, m.pose_dim, rng), d(m.hidden), pose_dim(m.pose_dim) {
        std::size_t in = m.pose_dim;
        for (int i = 0; i < 4; ++i) {
            init_net.emplace_back(ps, prefix + ".init" + std::to_string(i), in, m.hidden, rng);
            in = m.hidden;
        }
    }

    Value<T> init_embedding(const Value<T>& pose_row) const {
        Value<T> x = pose_row;  // 1 x 6
        for (std::size_t i = 0; i < init_net.size(); ++i) {
            x = init_net[i](x);
            if (i + 1 < init_net.size()) x = relu(x);
        }
        return x;
    }

    /// latents: T x d, s: 1 x d style code, h_r: initial pose (1 x 6).
    /// teacher: ground-truth poses (T x 6) for the sdt-tf variant only.
    /// Returns the generated pose sequence T x 6.
    Value<T> operator()(const Value<T>& latents, const Value<T>& s, const Tensor<T>& h_r,
                        const Tensor<T>* teacher = nullptr) const {
        const std::size_t Tlen = latents.val().rows();
        if (variant == "sdt-tf" && !teacher)
            throw std::invalid_argument("sdt-tf decoding requires a teacher pose sequence");
        auto dec = xl;  // cheap copy of handles; state below is per-call
        dec.use_memory = variant == "xl";
        auto st = dec.make_state();

        Value<T> e_prev = init_embedding(Value<T>(h_r));
        Value<T> zero_e(Tensor<T>::zeros({1, d}));
        std::vector<Value<T>> rows;
        rows.reserve(Tlen);
        for (std::size_t i = 0; i < Tlen; ++i) {
            auto style_i = add(Value<T>(nn::positional_encoding<T>(i, 1, d)), s);
            auto a_i = slice_rows(latents, i, 1);
            auto x = fuse(concat_cols<T>({a_i, use_set ? e_prev : zero_e, style_i}));
            auto e_i = dec.step(st, x);
            rows.push_back(head(e_i));
            if (variant == "sdt-tf") {
                Tensor<T> prev({1, pose_dim});
                for (std::size_t c = 0; c < pose_dim; ++c) prev.data[c] = teacher->at(i, c);
                e_prev = init_embedding(Value<T>(prev));
            } else {
                e_prev = e_i;
            }
        }
        return concat_rows(rows);
    }
};

// ---- discriminators and losses ------------------------------------------

/// T x d conditioning block: style code repeated per frame with positional
/// embeddings added (feature-axis concatenation keeps T intact for the 1-D
/// convolutions).
template <typename T>
Value<T> style_condition_block(const Value<T>& s, std::size_t t_len) {
    return add(Value<T>(nn::positional_encoding<T>(0, t_len, s.val().cols())), s);
}

/// channels x T input for the conditional discriminator.
template <typename T>
Value<T> conditioned_disc_input(const Value<T>& seq, const Value<T>& s) {
    return transpose(concat_cols<T>({seq, style_condition_block(s, seq.val().rows())}));
}

template <typename T>
struct AdvLosses {
    Value<T> d_loss, g_loss;
};

/// LSGAN temporal losses; `real`/`fake` are T x C sequences. The fake is
/// detached inside the discriminator loss.
template <typename T>
AdvLosses<T> pose_adversarial_losses(const nn::PatchDisc1D<T>& disc, const Value<T>& real, const Value<T>& fake) {
    AdvLosses<T> out;
    out.d_loss = add(nn::lsgan_target_loss(disc(transpose(real)), T(1)),
                     nn::lsgan_target_loss(disc(transpose(fake.detach())), T(0)));
    out.g_loss = nn::lsgan_target_loss(disc(transpose(fake)), T(1));
    return out;
}

/// Eq. 8 / Eq. 9: real with matched style -> 1, real with mismatched
/// style -> 0; both style-conditioned generations pushed toward 1 under
/// their own conditioning.
template <typename T>
AdvLosses<T> pose_style_losses(const nn::PatchDisc1D<T>& disc, const Value<T>& real, const Value<T>& fake_s,
                               const Value<T>& fake_sn, const Value<T>& s, const Value<T>& s_neg) {
    AdvLosses<T> out;
    out.d_loss = add(nn::lsgan_target_loss(disc(conditioned_disc_input(real, s)), T(1)),
                     nn::lsgan_target_loss(disc(conditioned_disc_input(real, s_neg)), T(0)));
    out.g_loss = add(nn::lsgan_target_loss(disc(conditioned_disc_input(fake_s, s)), T(1)),
                     nn::lsgan_target_loss(disc(conditioned_disc_input(fake_sn, s_neg)), T(1)));
    return out;
}

/// Eq. 10 weighted total.
template <typename T>
Value<T> pose_total_loss(const LossConfig& w, const Value<T>& rec, const Value<T>& trip, const Value<T>& tem,
                         const Value<T>& style) {
    auto total = scale(rec, T(w.lambda_h_rec));
    total = add(total, scale(trip, T(w.lambda_h_trip)));
    total = add(total, scale(tem, T(w.lambda_h_tem)));
    total = add(total, scale(style, T(w.lambda_h_style)));
    return total;
}

/// Channel z-normalization against corpus statistics (for SSIM's unit
/// dynamic-range convention).
template <typename T>
Value<T> normalize_channels(const Value<T>& seq, const Tensor<T>& mean, const Tensor<T>& stddev) {
    const std::size_t C = seq.val().cols();
    if (mean.numel() != C || stddev.numel() != C) throw ShapeError("channel stats do not match sequence width");
    Tensor<T> m({1, C}, mean.data), s({1, C}, stddev.data);
    return divv(sub(seq, Value<T>(m)), Value<T>(s));
}

}  // namespace sm::pose
