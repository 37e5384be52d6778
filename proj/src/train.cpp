#include "sm/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sm::train {

namespace {

using corpus::Clip;
using corpus::Corpus;
using corpus::Utterance;

TensorF rows_slice(const TensorF& t, std::size_t start, std::size_t len) {
    const std::size_t C = t.cols();
    TensorF out({len, C});
    std::copy(t.data.begin() + start * C, t.data.begin() + (start + len) * C, out.data.begin());
    return out;
}

TensorI label_slice(const TensorI& t, std::size_t start, std::size_t len) {
    TensorI out({len});
    std::copy(t.data.begin() + start, t.data.begin() + start + len, out.data.begin());
    return out;
}

Value<float> zero_scalar() { return Value<float>(TensorF::scalar(0.0f)); }

bool grads_finite(const ParamStore<float>& ps) {
    for (const auto& [k, v] : const_cast<ParamStore<float>&>(ps).all()) {
        for (float g : v.grad().data)
            if (!std::isfinite(g)) return false;
    }
    return true;
}

}  // namespace

// ---- optimizer -----------------------------------------------------------

void Adam::step(ParamStore<float>& ps, double lr) {
    if (!grads_finite(ps)) {
        ++skipped;
        return;
    }
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (auto& [name, p] : ps.all()) {
        const auto& g = p.grad();
        if (g.data.empty()) continue;
        auto& mt = m[name];
        auto& vt = v[name];
        if (mt.data.empty()) mt = TensorF::zeros(p.val().shape);
        if (vt.data.empty()) vt = TensorF::zeros(p.val().shape);
        auto& w = p.mutable_val();
        for (std::size_t i = 0; i < w.data.size(); ++i) {
            const double gi = g.data[i];
            mt.data[i] = static_cast<float>(beta1 * mt.data[i] + (1.0 - beta1) * gi);
            vt.data[i] = static_cast<float>(beta2 * vt.data[i] + (1.0 - beta2) * gi * gi);
            const double mhat = mt.data[i] / bc1;
            const double vhat = vt.data[i] / bc2;
            w.data[i] -= static_cast<float>(lr * mhat / (std::sqrt(vhat) + eps));
        }
    }
}

void Adam::to_checkpoint(Checkpoint& ck, const std::string& tag) const {
    for (const auto& [name, mt] : m) ck.tensors[tag + ".m." + name] = mt;
    for (const auto& [name, vt] : v) ck.tensors[tag + ".v." + name] = vt;
    ck.scalars[tag + ".t"] = static_cast<double>(t);
    ck.scalars[tag + ".skipped"] = static_cast<double>(skipped);
}

void Adam::from_checkpoint(const Checkpoint& ck, const std::string& tag) {
    m.clear();
    v.clear();
    const std::string mp = tag + ".m.", vp = tag + ".v.";
    for (const auto& [name, t_] : ck.tensors) {
        if (name.rfind(mp, 0) == 0) m[name.substr(mp.size())] = t_;
        if (name.rfind(vp, 0) == 0) v[name.substr(vp.size())] = t_;
    }
    t = static_cast<std::size_t>(ck.scalars.at(tag + ".t"));
    auto it = ck.scalars.find(tag + ".skipped");
    skipped = it == ck.scalars.end() ? 0 : static_cast<std::size_t>(it->second);
}

double lr_at(const TrainConfig& tc, std::size_t epoch) {
    if (tc.lr_decay_epochs <= 1 || epoch >= tc.lr_decay_epochs - 1) return tc.lr_final;
    const double f = static_cast<double>(epoch) / static_cast<double>(tc.lr_decay_epochs - 1);
    return tc.lr_initial + f * (tc.lr_final - tc.lr_initial);
}

Rng epoch_rng(std::uint64_t seed, std::uint64_t branch_tag, std::size_t epoch) {
    return Rng(seed).spawn(branch_tag).spawn(static_cast<std::uint64_t>(epoch) + 1);
}

// ---- parameter <-> checkpoint glue ---------------------------------------

void params_to_checkpoint(const ParamStore<float>& ps, Checkpoint& ck, const std::string& tag) {
    for (const auto& [name, p] : const_cast<ParamStore<float>&>(ps).all()) ck.tensors[tag + "." + name] = p.val();
}

void params_from_checkpoint(ParamStore<float>& ps, const Checkpoint& ck, const std::string& tag) {
    for (auto& [name, p] : ps.all()) {
        auto it = ck.tensors.find(tag + "." + name);
        if (it == ck.tensors.end()) throw std::runtime_error("checkpoint is missing parameter " + tag + "." + name);
        if (it->second.shape != p.val().shape)
            throw ShapeError("checkpoint parameter " + name + " has shape " + shape_str(it->second.shape));
        p.mutable_val() = it->second;
    }
}

// ---- channel statistics ---------------------------------------------------

TensorF channel_mean(const Corpus& c, bool pose) {
    const std::size_t C = pose ? c.utterances.front().pose.cols() : c.utterances.front().expr.cols();
    TensorF mean({C});
    double n = 0;
    for (const auto& u : c.utterances) {
        if (u.holdout) continue;
        const TensorF& seq = pose ? u.pose : u.expr;
        for (std::size_t t = 0; t < seq.rows(); ++t)
            for (std::size_t ch = 0; ch < C; ++ch) mean.data[ch] += seq.at(t, ch);
        n += static_cast<double>(seq.rows());
    }
    for (auto& v : mean.data) v = static_cast<float>(v / n);
    return mean;
}

TensorF channel_sd(const Corpus& c, bool pose, const TensorF& mean) {
    const std::size_t C = mean.numel();
    TensorF sd({C});
    double n = 0;
    for (const auto& u : c.utterances) {
        if (u.holdout) continue;
        const TensorF& seq = pose ? u.pose : u.expr;
        for (std::size_t t = 0; t < seq.rows(); ++t)
            for (std::size_t ch = 0; ch < C; ++ch) {
                const double d = seq.at(t, ch) - mean.data[ch];
                sd.data[ch] += static_cast<float>(d * d);
            }
        n += static_cast<double>(seq.rows());
    }
    for (auto& v : sd.data) v = std::max(1e-3f, static_cast<float>(std::sqrt(v / n)));
    return sd;
}

Value<float> pad_rows_to(const Value<float>& x, std::size_t min_rows) {
    const std::size_t R = x.val().rows();
    if (R >= min_rows) return x;
    std::vector<Value<float>> parts = {x};
    auto last = slice_rows(x, R - 1, 1);
    for (std::size_t i = R; i < min_rows; ++i) parts.push_back(last);
    return concat_rows(parts);
}

// ---- pose branch ----------------------------------------------------------

PoseBranch::PoseBranch(const RunConfig& cfg_, Rng& rng) : cfg(cfg_) {
    const auto& m = cfg.model;
    es = style::StyleEncoder<float>(ps_g, "es", m.pose_dim, m, cfg.corpus.pose_clip_min, cfg.corpus.pose_clip_max, rng);
    if (cfg.train.pose_input == "phoneme")
        enc = pose::SeqEncoder<float>(ps_g, "ea", m.phoneme_vocab, 0, m, rng);
    else
        enc = pose::SeqEncoder<float>(ps_g, "ea", m.acoustic_dim, m, rng);
    dec = pose::PoseDecoder<float>(ps_g, "dh", m, rng);
    dec.variant = cfg.train.decoder;
    dec.use_set = !cfg.train.no_set;
    const std::vector<std::size_t> dw = {m.disc_width, 2 * m.disc_width, 4 * m.disc_width, 4 * m.disc_width};
    disc_t = nn::PatchDisc1D<float>(ps_d, "dt", m.pose_dim, rng, dw);
    disc_s = nn::PatchDisc1D<float>(ps_d, "ds", m.pose_dim + m.hidden, rng, dw);
    chan_mean = TensorF::zeros({m.pose_dim});
    chan_sd = TensorF::full({m.pose_dim}, 1.0f);
}

void PoseBranch::set_channel_stats(const Corpus& c) {
    chan_mean = channel_mean(c, /*pose=*/true);
    chan_sd = channel_sd(c, /*pose=*/true, chan_mean);
}

Value<float> PoseBranch::encode_style(const TensorF& pose_clip) { return es(Value<float>(pose_clip)); }

Value<float> PoseBranch::generate(const Utterance& u, const Clip& clip, const Value<float>& s, bool teacher_force) {
    TensorF h_r({1, cfg.model.pose_dim});
    for (std::size_t ch = 0; ch < cfg.model.pose_dim; ++ch) h_r.data[ch] = u.pose.at(clip.start, ch);
    TensorF teacher;
    if (teacher_force) teacher = rows_slice(u.pose, clip.start, clip.len);
    if (cfg.train.pose_input == "phoneme") {
        TensorI ph = label_slice(u.phonemes, clip.start, clip.len);
        return generate_seq(nullptr, &ph, s, h_r, teacher_force ? &teacher : nullptr);
    }
    TensorF ac = rows_slice(u.acoustics, clip.start, clip.len);
    return generate_seq(&ac, nullptr, s, h_r, teacher_force ? &teacher : nullptr);
}

Value<float> PoseBranch::generate_seq(const TensorF* acoustics, const TensorI* phonemes, const Value<float>& s,
                                      const TensorF& h_r, const TensorF* teacher) {
    Value<float> latents;
    if (cfg.train.pose_input == "phoneme") {
        if (!phonemes) throw std::invalid_argument("pose branch is phoneme-driven; phoneme labels required");
        latents = enc(*phonemes);
    } else {
        if (!acoustics) throw std::invalid_argument("pose branch is acoustic-driven; acoustic features required");
        latents = enc(Value<float>(*acoustics));
    }
    // The decoder head predicts z-normalized pose channels (unit dynamic
    // range, matching the SSIM convention); denormalize at the boundary so
    // callers always see raw coefficient scale. Raw pose channels span two
    // orders of magnitude of standard deviation, and a head that must emit
    // them directly starts ~10 sigma off, where the SSIM objective is flat.
    auto out_n = dec(latents, s, h_r, teacher);
    const std::size_t C = chan_mean.numel();
    TensorF m({1, C}, chan_mean.data), sd({1, C}, chan_sd.data);
    return add(mul(out_n, Value<float>(sd)), Value<float>(m));
}

Checkpoint PoseBranch::to_checkpoint(std::size_t epoch, const Adam& og, const Adam& od) const {
    Checkpoint ck;
    ck.epoch = epoch;
    ck.rng_state = Rng(cfg.seed).state_hex();
    ck.config_json = cfg.to_json();
    params_to_checkpoint(ps_g, ck, "g");
    params_to_checkpoint(ps_d, ck, "d");
    ck.tensors["buf.chan_mean"] = chan_mean;
    ck.tensors["buf.chan_sd"] = chan_sd;
    og.to_checkpoint(ck, "og");
    od.to_checkpoint(ck, "od");
    return ck;
}

void PoseBranch::from_checkpoint(const Checkpoint& ck, Adam& og, Adam& od) {
    params_from_checkpoint(ps_g, ck, "g");
    params_from_checkpoint(ps_d, ck, "d");
    chan_mean = ck.tensors.at("buf.chan_mean");
    chan_sd = ck.tensors.at("buf.chan_sd");
    og.from_checkpoint(ck, "og");
    od.from_checkpoint(ck, "od");
}

PoseBranch PoseBranch::load(const Checkpoint& ck, Adam& og, Adam& od) {
    RunConfig cfg = RunConfig::from_json(ck.config_json);
    Rng rng(cfg.seed);
    PoseBranch b(cfg, rng);
    b.from_checkpoint(ck, og, od);
    return b;
}

// ---- expression branch ----------------------------------------------------

ExprBranch::ExprBranch(const RunConfig& cfg_, const std::vector<std::size_t>& mouth_cols_, Rng& rng)
    : cfg(cfg_), mouth_cols(mouth_cols_) {
    const auto& m = cfg.model;
    es = style::StyleEncoder<float>(ps_g, "es", m.expr_dim, m, cfg.corpus.expr_clip_min, cfg.corpus.expr_clip_max, rng);
    enc = pose::SeqEncoder<float>(ps_g, "ep", m.phoneme_vocab, 0, m, rng);
    dec = expr::ExprDecoder<float>(ps_g, "de", m, mouth_cols, rng);
    disc_t = nn::PatchDisc1D<float>(ps_d, "dt", m.expr_dim, rng,
                                    {m.disc_width, 2 * m.disc_width, 4 * m.disc_width, 4 * m.disc_width});
    chan_mean = TensorF::zeros({m.expr_dim});
    chan_sd = TensorF::full({m.expr_dim}, 1.0f);
}

void ExprBranch::set_channel_stats(const Corpus& c) {
    chan_mean = channel_mean(c, /*pose=*/false);
    chan_sd = channel_sd(c, /*pose=*/false, chan_mean);
}

Value<float> ExprBranch::encode_style(const TensorF& expr_clip) { return es(Value<float>(expr_clip)); }

Value<float> ExprBranch::generate(const TensorI& phonemes, const Value<float>& s) {
    // As in the pose branch, the decoder head predicts z-normalized
    // coefficients; denormalize at the boundary so callers always see raw
    // coefficient scale.
    auto out_n = dec(enc(phonemes), s);
    const std::size_t C = chan_mean.numel();
    TensorF m({1, C}, chan_mean.data), sd({1, C}, chan_sd.data);
    return add(mul(out_n, Value<float>(sd)), Value<float>(m));
}

Checkpoint ExprBranch::to_checkpoint(std::size_t epoch, const Adam& og, const Adam& od) const {
    Checkpoint ck;
    ck.epoch = epoch;
    ck.rng_state = Rng(cfg.seed).state_hex();
    ck.config_json = cfg.to_json();
    params_to_checkpoint(ps_g, ck, "g");
    params_to_checkpoint(ps_d, ck, "d");
    ck.tensors["buf.chan_mean"] = chan_mean;
    ck.tensors["buf.chan_sd"] = chan_sd;
    TensorF mc({mouth_cols.size()});
    for (std::size_t i = 0; i < mouth_cols.size(); ++i) mc.data[i] = static_cast<float>(mouth_cols[i]);
    ck.tensors["buf.mouth_cols"] = mc;
    og.to_checkpoint(ck, "og");
    od.to_checkpoint(ck, "od");
    return ck;
}

void ExprBranch::from_checkpoint(const Checkpoint& ck, Adam& og, Adam& od) {
    params_from_checkpoint(ps_g, ck, "g");
    params_from_checkpoint(ps_d, ck, "d");
    chan_mean = ck.tensors.at("buf.chan_mean");
    chan_sd = ck.tensors.at("buf.chan_sd");
    og.from_checkpoint(ck, "og");
    od.from_checkpoint(ck, "od");
}

ExprBranch ExprBranch::load(const Checkpoint& ck, Adam& og, Adam& od) {
    RunConfig cfg = RunConfig::from_json(ck.config_json);
    const TensorF& mc = ck.tensors.at("buf.mouth_cols");
    std::vector<std::size_t> cols(mc.numel());
    for (std::size_t i = 0; i < cols.size(); ++i) cols[i] = static_cast<std::size_t>(mc.data[i] + 0.5f);
    Rng rng(cfg.seed);
    ExprBranch b(cfg, cols, rng);
    b.from_checkpoint(ck, og, od);
    return b;
}

// ---- pretrained helper models ---------------------------------------------

SyncModel::SyncModel(const RunConfig& cfg_, const face::FaceBasis& basis, Rng& rng)
    : cfg(cfg_), disc(ps, "sync", cfg.model, rng), geom(expr::MouthGeometry<float>::from_basis(basis)) {}

Checkpoint SyncModel::to_checkpoint(std::size_t epoch, const Adam& opt) const {
    Checkpoint ck;
    ck.epoch = epoch;
    ck.rng_state = Rng(cfg.seed).state_hex();
    ck.config_json = cfg.to_json();
    params_to_checkpoint(ps, ck, "s");
    ck.tensors["buf.geom_basis"] = geom.basis;
    ck.tensors["buf.geom_mean"] = geom.mean;
    opt.to_checkpoint(ck, "o");
    return ck;
}

void SyncModel::from_checkpoint(const Checkpoint& ck, Adam* opt) {
    params_from_checkpoint(ps, ck, "s");
    geom.basis = ck.tensors.at("buf.geom_basis");
    geom.mean = ck.tensors.at("buf.geom_mean");
    geom.points = geom.mean.numel() / 3;
    if (opt) opt->from_checkpoint(ck, "o");
}

SyncModel SyncModel::load(const Checkpoint& ck, Adam* opt) {
    RunConfig cfg = RunConfig::from_json(ck.config_json);
    Rng rng(cfg.seed);
    face::FaceBasis dummy = face::make_synthetic_basis(60, 8, cfg.model.expr_dim, 2, cfg.model.lower_dim, 1);
    SyncModel s(cfg, dummy, rng);  // geometry is immediately overwritten from the buffers
    s.from_checkpoint(ck, opt);
    return s;
}

StyleClfModel::StyleClfModel(const RunConfig& cfg_, Rng& rng)
    : cfg(cfg_), clf(ps, "clf", cfg.model.expr_dim, cfg.corpus.classes, rng) {}

Checkpoint StyleClfModel::to_checkpoint(std::size_t epoch, const Adam& opt) const {
    Checkpoint ck;
    ck.epoch = epoch;
    ck.rng_state = Rng(cfg.seed).state_hex();
    ck.config_json = cfg.to_json();
    params_to_checkpoint(ps, ck, "s");
    opt.to_checkpoint(ck, "o");
    return ck;
}

void StyleClfModel::from_checkpoint(const Checkpoint& ck, Adam* opt) {
    params_from_checkpoint(ps, ck, "s");
    if (opt) opt->from_checkpoint(ck, "o");
}

StyleClfModel StyleClfModel::load(const Checkpoint& ck, Adam* opt) {
    RunConfig cfg = RunConfig::from_json(ck.config_json);
    Rng rng(cfg.seed);
    StyleClfModel s(cfg, rng);
    s.from_checkpoint(ck, opt);
    return s;
}

// ---- pose training ---------------------------------------------------------

std::vector<EpochStats> train_pose_branch(PoseBranch& b, Adam& opt_g, Adam& opt_d, const Corpus& c,
                                          std::size_t start_epoch, std::size_t end_epoch, std::size_t steps_per_epoch,
                                          const EpochCallback& cb) {
    std::vector<EpochStats> out;
    const auto& tc = b.cfg.train;
    const auto& lw = b.cfg.loss;
    const float c1 = static_cast<float>(lw.ssim_c1), c2 = static_cast<float>(lw.ssim_c2);
    const bool teacher_force = tc.decoder == "sdt-tf";
    const std::size_t B = std::max<std::size_t>(1, tc.batch);

    for (std::size_t e = start_epoch; e < end_epoch; ++e) {
        Rng rng = epoch_rng(b.cfg.seed, kPoseTag, e);
        const double lr = lr_at(tc, e);
        const bool style_active = !tc.no_style_disc && 2 * e >= tc.epochs;
        EpochStats st;
        st.epoch = e;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            Value<float> g_sum, d_sum;
            double rec_acc = 0, trip_acc = 0;
            for (std::size_t bi = 0; bi < B; ++bi) {
                auto tri = corpus::sample_triplet(c, "pose", rng);
                const auto& ua = c.utterances[tri.anchor.utt];
                auto aclip = tri.anchor;
                aclip.len = std::min(aclip.len, tc.pose_train_len);

                auto s_a = b.encode_style(rows_slice(ua.pose, tri.anchor.start, tri.anchor.len));
                auto s_p = b.encode_style(rows_slice(c.utterances[tri.positive.utt].pose, tri.positive.start,
                                                     tri.positive.len));
                auto s_n = b.encode_style(rows_slice(c.utterances[tri.negative.utt].pose, tri.negative.start,
                                                     tri.negative.len));

                auto trip = tc.no_trip ? zero_scalar()
                                       : style::triplet_loss(s_a, s_p, s_n, static_cast<float>(lw.gamma));
                auto fake = b.generate(ua, aclip, s_a, teacher_force);
                Value<float> real(rows_slice(ua.pose, aclip.start, aclip.len));
                auto fake_n = pose::normalize_channels(fake, b.chan_mean, b.chan_sd);
                auto real_n = pose::normalize_channels(real, b.chan_mean, b.chan_sd);
                auto rec = pose::ssim_loss(fake_n, real_n, c1, c2);

                auto tem_g = zero_scalar(), tem_d = zero_scalar();
                auto sty_g = zero_scalar(), sty_d = zero_scalar();
                const std::size_t rf = nn::PatchDisc1D<float>::kReceptiveField;
                if (!tc.no_tem) {
                    auto adv = pose::pose_adversarial_losses(b.disc_t, pad_rows_to(real_n, rf), pad_rows_to(fake_n, rf));
                    tem_g = adv.g_loss;
                    tem_d = adv.d_loss;
                }
                if (style_active) {
                    auto fake2 = b.generate(ua, aclip, s_n, teacher_force);
                    auto fake2_n = pose::normalize_channels(fake2, b.chan_mean, b.chan_sd);
                    auto sl = pose::pose_style_losses(b.disc_s, pad_rows_to(real_n, rf), pad_rows_to(fake_n, rf),
                                                     pad_rows_to(fake2_n, rf), s_a.detach(), s_n.detach());
                    sty_g = sl.g_loss;
                    sty_d = sl.d_loss;
                }
                auto g_total = pose::pose_total_loss(lw, rec, trip, tem_g, sty_g);
                auto d_total = add(tem_d, sty_d);
                g_sum = g_sum.defined() ? add(g_sum, g_total) : g_total;
                d_sum = d_sum.defined() ? add(d_sum, d_total) : d_total;
                rec_acc += rec.val().data[0];
                trip_acc += trip.val().data[0];
            }
            auto g_avg = scale(g_sum, 1.0f / static_cast<float>(B));
            auto d_avg = scale(d_sum, 1.0f / static_cast<float>(B));
            st.g_loss += g_avg.val().data[0];
            st.d_loss += d_avg.val().data[0];
            st.rec += rec_acc / static_cast<double>(B);
            st.trip += trip_acc / static_cast<double>(B);
            ++st.steps;

            b.ps_g.zero_grad();
            b.ps_d.zero_grad();
            backward(g_avg);
            opt_g.step(b.ps_g, lr);
            b.ps_d.zero_grad();
            backward(d_avg);
            opt_d.step(b.ps_d, lr);
            b.ps_g.zero_grad();
            b.ps_d.zero_grad();
        }
        st.g_loss /= static_cast<double>(st.steps);
        st.d_loss /= static_cast<double>(st.steps);
        st.rec /= static_cast<double>(st.steps);
        st.trip /= static_cast<double>(st.steps);
        out.push_back(st);
        if (cb) cb(st);
    }
    return out;
}

// ---- expression training ---------------------------------------------------

std::vector<EpochStats> train_expr_branch(ExprBranch& b, const SyncModel& sync, const StyleClfModel& clf, Adam& opt_g,
                                          Adam& opt_d, const Corpus& c, std::size_t start_epoch, std::size_t end_epoch,
                                          std::size_t steps_per_epoch, const EpochCallback& cb) {
    std::vector<EpochStats> out;
    const auto& tc = b.cfg.train;
    const auto& lw = b.cfg.loss;
    const float c1 = static_cast<float>(lw.ssim_c1), c2 = static_cast<float>(lw.ssim_c2);
    const std::size_t B = std::max<std::size_t>(1, tc.batch);
    const_cast<ParamStore<float>&>(sync.ps).freeze();
    const_cast<ParamStore<float>&>(clf.ps).freeze();

    for (std::size_t e = start_epoch; e < end_epoch; ++e) {
        Rng rng = epoch_rng(b.cfg.seed, kExprTag, e);
        const double lr = lr_at(tc, e);
        // The sync term is -log p with a frozen discriminator: on an
        // untrained generator p is tiny and its gradient (~1/p) swamps the
        // reconstruction. Sync and temporal-adversarial terms join once
        // reconstruction has had the first half of the schedule, mirroring
        // the pose branch's delayed style discriminator.
        const bool aux_active = 2 * e >= tc.epochs;
        const bool use_sync = !tc.no_sync && aux_active;
        const bool use_tem = !tc.no_tem && aux_active;
        EpochStats st;
        st.epoch = e;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            Value<float> g_sum, d_sum;
            double rec_acc = 0, trip_acc = 0;
            for (std::size_t bi = 0; bi < B; ++bi) {
                auto tri = corpus::sample_triplet(c, "expr", rng);
                const auto& ua = c.utterances[tri.anchor.utt];
                auto aclip = tri.anchor;
                aclip.len = std::min(aclip.len, tc.clip_len);

                auto s_a = b.encode_style(rows_slice(ua.expr, tri.anchor.start, tri.anchor.len));
                auto s_p = b.encode_style(rows_slice(c.utterances[tri.positive.utt].expr, tri.positive.start,
                                                     tri.positive.len));
                auto s_n = b.encode_style(rows_slice(c.utterances[tri.negative.utt].expr, tri.negative.start,
                                                     tri.negative.len));
                auto trip = tc.no_trip ? zero_scalar()
                                       : style::triplet_loss(s_a, s_p, s_n, static_cast<float>(lw.gamma));

                TensorI ph = label_slice(ua.phonemes, aclip.start, aclip.len);
                auto d_hat = b.generate(ph, s_a);
                Value<float> real(rows_slice(ua.expr, aclip.start, aclip.len));
                auto d_hat_n = pose::normalize_channels(d_hat, b.chan_mean, b.chan_sd);
                auto real_n = pose::normalize_channels(real, b.chan_mean, b.chan_sd);
                auto rec = expr::expr_recon_loss(real_n, d_hat_n, static_cast<float>(lw.mu), c1, c2);

                auto sync_l = use_sync ? expr::sync_loss(d_hat, ph, sync.geom, sync.disc) : zero_scalar();
                auto sty = expr::expr_style_loss(clf.clf, d_hat, static_cast<std::size_t>(ua.style));

                auto tem_g = zero_scalar(), tem_d = zero_scalar();
                if (use_tem) {
                    const std::size_t rf = nn::PatchDisc1D<float>::kReceptiveField;
                    auto adv = pose::pose_adversarial_losses(b.disc_t, pad_rows_to(real_n, rf),
                                                             pad_rows_to(d_hat_n, rf));
                    tem_g = adv.g_loss;
                    tem_d = adv.d_loss;
                }
                auto g_total = expr::expr_total_loss(lw, rec, trip, sync_l, tem_g, sty);
                g_sum = g_sum.defined() ? add(g_sum, g_total) : g_total;
                d_sum = d_sum.defined() ? add(d_sum, tem_d) : tem_d;
                rec_acc += rec.val().data[0];
                trip_acc += trip.val().data[0];
            }
            auto g_avg = scale(g_sum, 1.0f / static_cast<float>(B));
            auto d_avg = scale(d_sum, 1.0f / static_cast<float>(B));
            st.g_loss += g_avg.val().data[0];
            st.d_loss += d_avg.val().data[0];
            st.rec += rec_acc / static_cast<double>(B);
            st.trip += trip_acc / static_cast<double>(B);
            ++st.steps;

            b.ps_g.zero_grad();
            b.ps_d.zero_grad();
            backward(g_avg);
            opt_g.step(b.ps_g, lr);
            b.ps_d.zero_grad();
            backward(d_avg);
            opt_d.step(b.ps_d, lr);
            b.ps_g.zero_grad();
            b.ps_d.zero_grad();
        }
        st.g_loss /= static_cast<double>(st.steps);
        st.d_loss /= static_cast<double>(st.steps);
        st.rec /= static_cast<double>(st.steps);
        st.trip /= static_cast<double>(st.steps);
        out.push_back(st);
        if (cb) cb(st);
    }
    return out;
}

// ---- sync discriminator pretraining ---------------------------------------

namespace {

/// Mouth displacements of one ground-truth frame (constant in the graph).
/// The constant mean geometry is an order of magnitude larger than the
/// per-frame displacement and carries no synchrony information, so the
/// discriminator sees displacements from the neutral mouth.
TensorF mouth_points_at(const expr::MouthGeometry<float>& geom, const TensorF& expr_seq, std::size_t t) {
    const std::size_t E = expr_seq.cols();
    TensorF pts({geom.points, 3});
    for (std::size_t r = 0; r < geom.points; ++r)
        for (std::size_t a = 0; a < 3; ++a) {
            const std::size_t col = r * 3 + a;
            double v = 0.0;
            for (std::size_t ecol = 0; ecol < E; ++ecol) v += expr_seq.at(t, ecol) * geom.basis.at(ecol, col);
            pts.at(r, a) = static_cast<float>(v);
        }
    return pts;
}

TensorI phoneme_window(const TensorI& phonemes, std::size_t t, std::size_t window) {
    const long half = static_cast<long>(window / 2);
    const long T = static_cast<long>(phonemes.numel());
    TensorI win({window});
    for (long j = 0; j < static_cast<long>(window); ++j) {
        long raw = static_cast<long>(t) + j - half;
        win.data[static_cast<std::size_t>(j)] =
            phonemes.data[static_cast<std::size_t>(std::min(std::max(raw, 0L), T - 1))];
    }
    return win;
}

struct SyncSample {
    TensorF pts;
    TensorI win;
    bool positive = false;
};

SyncSample draw_sync_sample(const SyncModel& s, const Corpus& c, const std::vector<std::size_t>& ids, Rng& rng) {
    SyncSample out;
    const auto& u = c.utterances[ids[rng.uniform_int(ids.size())]];
    const std::size_t T = u.length();
    const std::size_t t = rng.uniform_int(T);
    out.pts = mouth_points_at(s.geom, u.expr, t);
    out.positive = rng.uniform() < 0.5;
    if (out.positive) {
        out.win = phoneme_window(u.phonemes, t, s.disc.window);
        return out;
    }
    // A shifted or foreign window can still carry the same center phoneme
    // (same segment, or by chance), in which case the pair is synchronous in
    // coefficient space and the label would be noise. Redraw until the
    // window is genuinely asynchronous: its center phoneme differs.
    const std::int32_t aligned_center = u.phonemes[t];
    for (int attempt = 0; attempt < 32; ++attempt) {
        if (rng.uniform() < 0.5 && T > 12) {
            // Desynchronized: phoneme window shifted by at least 5 frames.
            const std::size_t shift = 5 + rng.uniform_int(T - 10);
            out.win = phoneme_window(u.phonemes, (t + shift) % T, s.disc.window);
        } else {
            // Mismatched: phonemes from a different utterance.
            const auto& u2 = c.utterances[ids[rng.uniform_int(ids.size())]];
            out.win = phoneme_window(u2.phonemes, rng.uniform_int(u2.length()), s.disc.window);
        }
        if (out.win[s.disc.window / 2] != aligned_center) break;
    }
    return out;
}

}  // namespace

std::vector<EpochStats> pretrain_sync(SyncModel& s, Adam& opt, const Corpus& c, std::size_t epochs,
                                      std::size_t steps_per_epoch, const EpochCallback& cb) {
    std::vector<EpochStats> out;
    auto ids = c.split_ids(/*holdout=*/false);
    const std::size_t B = 8;
    for (std::size_t e = 0; e < epochs; ++e) {
        Rng rng = epoch_rng(c.seed, kSyncTag, e);
        EpochStats st;
        st.epoch = e;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            Value<float> sum;
            for (std::size_t bi = 0; bi < B; ++bi) {
                auto sample = draw_sync_sample(s, c, ids, rng);
                auto cs = s.disc.probability(Value<float>(sample.pts), sample.win);
                auto p = clampv(scale(add_const(cs, 1.0f), 0.5f), 1e-6f, 1.0f - 1e-6f);
                auto loss = sample.positive ? neg(vlog(p)) : neg(vlog(add_const(neg(p), 1.0f)));
                sum = sum.defined() ? add(sum, loss) : loss;
            }
            auto avg = scale(sum, 1.0f / static_cast<float>(B));
            st.g_loss += avg.val().data[0];
            ++st.steps;
            s.ps.zero_grad();
            backward(avg);
            opt.step(s.ps, 1e-3);
            s.ps.zero_grad();
        }
        st.g_loss /= static_cast<double>(st.steps);
        out.push_back(st);
        if (cb) cb(st);
    }
    return out;
}

double sync_auc(const SyncModel& s, const Corpus& c, bool holdout, std::size_t samples, Rng& rng) {
    auto ids = c.split_ids(holdout);
    std::vector<double> pos, neg;
    NoGradGuard ng;
    while (pos.size() < samples || neg.size() < samples) {
        auto sample = draw_sync_sample(s, c, ids, rng);
        auto& bucket = sample.positive ? pos : neg;
        if (bucket.size() >= samples) continue;
        bucket.push_back(s.disc.probability(Value<float>(sample.pts), sample.win).val().data[0]);
    }
    // Rank-sum AUC with tie correction.
    double wins = 0;
    for (double p : pos)
        for (double n : neg) wins += p > n ? 1.0 : (p == n ? 0.5 : 0.0);
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

double mean_sync_prob(const SyncModel& s, const TensorF& expr_clip, const TensorI& phonemes) {
    NoGradGuard ng;
    const std::size_t T = expr_clip.rows();
    double acc = 0;
    for (std::size_t t = 0; t < T; ++t) {
        // Reuse the differentiable path on a 1-frame clip to keep one code path.
        TensorF pts = mouth_points_at(s.geom, expr_clip, t);
        auto cs = s.disc.probability(Value<float>(pts), phoneme_window(phonemes, t, s.disc.window)).val().data[0];
        acc += 0.5 * (cs + 1.0);
    }
    return acc / static_cast<double>(T);
}

// ---- style classifier pretraining ------------------------------------------

std::vector<EpochStats> pretrain_style_clf(StyleClfModel& s, Adam& opt, const Corpus& c, std::size_t clip_len,
                                           std::size_t epochs, std::size_t steps_per_epoch, const EpochCallback& cb) {
    std::vector<EpochStats> out;
    auto ids = c.split_ids(/*holdout=*/false);
    const std::size_t B = 8;
    for (std::size_t e = 0; e < epochs; ++e) {
        Rng rng = epoch_rng(c.seed, kClfTag, e);
        EpochStats st;
        st.epoch = e;
        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            Value<float> sum;
            for (std::size_t bi = 0; bi < B; ++bi) {
                const auto& u = c.utterances[ids[rng.uniform_int(ids.size())]];
                const std::size_t len = std::min(clip_len, u.length());
                const std::size_t start = u.length() > len ? rng.uniform_int(u.length() - len) : 0;
                auto loss = expr::expr_style_loss(s.clf, Value<float>(rows_slice(u.expr, start, len)),
                                                  static_cast<std::size_t>(u.style));
                sum = sum.defined() ? add(sum, loss) : loss;
            }
            auto avg = scale(sum, 1.0f / static_cast<float>(B));
            st.g_loss += avg.val().data[0];
            ++st.steps;
            s.ps.zero_grad();
            backward(avg);
            opt.step(s.ps, 1e-3);
            s.ps.zero_grad();
        }
        st.g_loss /= static_cast<double>(st.steps);
        out.push_back(st);
        if (cb) cb(st);
    }
    return out;
}

double style_clf_accuracy(const StyleClfModel& s, const Corpus& c, bool holdout, std::size_t clip_len,
                          std::size_t samples, Rng& rng) {
    auto ids = c.split_ids(holdout);
    NoGradGuard ng;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const auto& u = c.utterances[ids[rng.uniform_int(ids.size())]];
        const std::size_t len = std::min(clip_len, u.length());
        const std::size_t start = u.length() > len ? rng.uniform_int(u.length() - len) : 0;
        auto p = s.clf.probabilities(Value<float>(rows_slice(u.expr, start, len))).val();
        std::size_t arg = 0;
        for (std::size_t k = 1; k < p.numel(); ++k)
            if (p.data[k] > p.data[arg]) arg = k;
        hits += arg == static_cast<std::size_t>(u.style) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(samples);
}

// ---- evaluation -----------------------------------------------------------

double intra_inter_ratio(const std::vector<TensorF>& codes, const std::vector<int>& labels) {
    double intra = 0, inter = 0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < codes.size(); ++i)
        for (std::size_t j = i + 1; j < codes.size(); ++j) {
            double d2 = 0;
            for (std::size_t k = 0; k < codes[i].numel(); ++k) {
                const double d = codes[i].data[k] - codes[j].data[k];
                d2 += d * d;
            }
            const double dist = std::sqrt(d2);
            if (labels[i] == labels[j]) {
                intra += dist;
                ++n_intra;
            } else {
                inter += dist;
                ++n_inter;
            }
        }
    if (n_intra == 0 || n_inter == 0) return 1.0;
    return (intra / static_cast<double>(n_intra)) / (inter / static_cast<double>(n_inter));
}

EvalMetrics evaluate(PoseBranch* pb, ExprBranch* eb, const SyncModel* sync, const Corpus& c,
                     const face::FaceBasis& basis, bool holdout, std::size_t max_utts, Rng& rng) {
    EvalMetrics em;
    auto ids = c.split_ids(holdout);
    if (ids.size() > max_utts) ids.resize(max_utts);
    NoGradGuard ng;
    double ssim_acc = 0, psnr_acc = 0, f_acc = 0, m_acc = 0, sync_acc = 0;
    std::size_t psnr_n = 0, lmd_n = 0;

    for (std::size_t id : ids) {
        const auto& u = c.utterances[id];
        if (pb) {
            Clip clip{id, 0, std::min<std::size_t>(u.length(), pb->cfg.train.pose_train_len)};
            const std::size_t slen = std::min(u.length(), pb->cfg.corpus.pose_clip_max);
            auto s = pb->encode_style(rows_slice(u.pose, 0, slen));
            // Teacher forcing is a training-time device only: a model trained
            // with it decodes free-running here, so the exposure-bias gap is
            // part of what the metric measures.
            const std::string trained_variant = pb->dec.variant;
            if (trained_variant == "sdt-tf") pb->dec.variant = "sdt-rr";
            auto gen = pb->generate(u, clip, s, /*teacher_force=*/false);
            pb->dec.variant = trained_variant;
            auto gen_n = pose::normalize_channels(gen, pb->chan_mean, pb->chan_sd);
            auto real_n = pose::normalize_channels(Value<float>(rows_slice(u.pose, 0, clip.len)), pb->chan_mean,
                                                   pb->chan_sd);
            const float c1 = static_cast<float>(pb->cfg.loss.ssim_c1), c2 = static_cast<float>(pb->cfg.loss.ssim_c2);
            ssim_acc += pose::ssim_value(gen_n, real_n, c1, c2).val().data[0];
        }
        if (eb) {
            const std::size_t len = std::min(u.length(), eb->cfg.train.clip_len);
            const std::size_t slen = std::min(u.length(), eb->cfg.corpus.expr_clip_max);
            auto s = eb->encode_style(rows_slice(u.expr, 0, slen));
            TensorI ph = label_slice(u.phonemes, 0, len);
            auto gen = eb->generate(ph, s).val();
            TensorF real = rows_slice(u.expr, 0, len);

            // PSNR over coefficients against the ground-truth dynamic range.
            double mse = 0, lo = real.data[0], hi = real.data[0];
            for (std::size_t i = 0; i < real.data.size(); ++i) {
                const double d = gen.data[i] - real.data[i];
                mse += d * d;
                lo = std::min<double>(lo, real.data[i]);
                hi = std::max<double>(hi, real.data[i]);
            }
            mse /= static_cast<double>(real.data.size());
            const double peak = std::max(hi - lo, 1e-6);
            psnr_acc += std::min(99.0, 10.0 * std::log10(peak * peak / std::max(mse, 1e-12)));
            ++psnr_n;

            // Landmark distances every 8th frame.
            TensorF phi({basis.id_dim(), 1});
            for (std::size_t t = 0; t < len; t += 8) {
                TensorF dg({basis.expr_dim(), 1}), dr({basis.expr_dim(), 1});
                for (std::size_t k = 0; k < basis.expr_dim(); ++k) {
                    dg.data[k] = gen.at(t, k);
                    dr.data[k] = real.at(t, k);
                }
                auto vg = face::evaluate_shape(basis, dg, phi);
                auto vr = face::evaluate_shape(basis, dr, phi);
                f_acc += face::landmark_distance(vg, vr);
                m_acc += face::landmark_distance(face::mouth_vertices(basis, dg), face::mouth_vertices(basis, dr));
                ++lmd_n;
            }
            if (sync) sync_acc += mean_sync_prob(*sync, gen, ph);
        }
        ++em.utterances;
    }
    (void)rng;
    const double n = std::max<double>(1.0, static_cast<double>(em.utterances));
    em.pose_ssim = pb ? ssim_acc / n : 0.0;
    em.expr_psnr = psnr_n ? psnr_acc / static_cast<double>(psnr_n) : 0.0;
    em.f_lmd = lmd_n ? f_acc / static_cast<double>(lmd_n) : 0.0;
    em.m_lmd = lmd_n ? m_acc / static_cast<double>(lmd_n) : 0.0;
    em.sync_prob = (eb && sync) ? sync_acc / n : 0.0;
    return em;
}

}  // namespace sm::train
