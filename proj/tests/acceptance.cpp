// Acceptance suite: one pass/fail line per criterion on stdout; training
// progress goes to stderr. Criteria may be selected by number on the command
// line (default: all). Exit status is nonzero if any selected criterion
// fails.
//
// The hyperparameter snapshot (criterion 2) pins the published defaults; the
// trained criteria (4-8) run on a reduced-width configuration of the same
// architecture so each branch fits its CPU-time budget.
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sm/corpus.hpp"
#include "sm/face.hpp"
#include "sm/gradsuite.hpp"
#include "sm/io.hpp"
#include "sm/style.hpp"
#include "sm/train.hpp"

using namespace sm;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    int id = 0;
    bool pass = false;
    std::string detail;
};

void log_epoch(const train::EpochStats& st) {
    std::fprintf(stderr, "    epoch %zu  g %.4f  d %.4f  rec %.4f  trip %.4f\n", st.epoch, st.g_loss, st.d_loss,
                 st.rec, st.trip);
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof(buf), f, ap);
    va_end(ap);
    return buf;
}

TensorF first_rows(const TensorF& t, std::size_t start, std::size_t n) {
    TensorF out({n, t.shape[1]});
    std::copy(t.data.begin() + start * t.shape[1], t.data.begin() + (start + n) * t.shape[1], out.data.begin());
    return out;
}

TensorI label_rows(const TensorI& t, std::size_t start, std::size_t n) {
    TensorI out({n});
    std::copy(t.data.begin() + start, t.data.begin() + start + n, out.data.begin());
    return out;
}

double mean_frame_distance(const TensorF& a, const TensorF& b) {
    const std::size_t T = a.shape[0], D = a.shape[1];
    double acc = 0;
    for (std::size_t t = 0; t < T; ++t) {
        double s = 0;
        for (std::size_t j = 0; j < D; ++j) {
            const double d = double(a.data[t * D + j]) - double(b.data[t * D + j]);
            s += d * d;
        }
        acc += std::sqrt(s);
    }
    return acc / double(T);
}

std::string read_bytes(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

// ---- reduced acceptance-scale configuration ------------------------------

RunConfig accept_cfg() {
    RunConfig r;
    r.seed = 2024;
    r.model.hidden = 32;
    r.model.heads = 2;
    r.model.enc_layers = 1;
    r.model.ffn_hidden = 48;
    r.model.style_dim = 32;
    r.model.adaptive_hidden = 48;
    r.model.experts = 2;
    r.model.expert_attn_hidden = 8;
    r.model.memory = 16;
    r.model.pose_dec_layers = 1;
    r.model.expr_dec_layers = 1;
    r.model.acoustic_dim = 8;
    r.model.expr_dim = 16;
    r.model.lower_dim = 4;
    r.model.upper_dim = 12;
    r.model.context_half_window = 2;
    r.model.sync_embed = 16;
    r.train.batch = 4;
    r.train.epochs = 12;
    r.train.lr_initial = 1e-3;
    r.train.lr_final = 1e-4;
    r.train.lr_decay_epochs = 12;
    r.train.pose_train_len = 48;
    r.train.clip_len = 32;
    r.corpus.classes = 8;
    r.corpus.utt_per_class = 8;
    r.corpus.utt_len = 120;
    r.corpus.expr_clip_min = 24;
    r.corpus.expr_clip_max = 48;
    r.corpus.pose_clip_min = 32;
    r.corpus.pose_clip_max = 64;
    r.corpus.holdout_fraction = 0.25;
    return r;
}

/// Shared trained artifacts for criteria 4-8, built lazily so a criterion
/// subset only pays for what it needs.
struct Artifacts {
    RunConfig cfg = accept_cfg();
    std::optional<corpus::Corpus> corpus_;
    std::optional<face::FaceBasis> basis_;
    std::optional<train::PoseBranch> pose_full, pose_noset, pose_tf;
    std::optional<train::ExprBranch> expr_;
    std::optional<train::SyncModel> sync_;
    std::optional<train::StyleClfModel> clf_;
    double sync_auc_holdout = 0;
    double pose_train_seconds = 0, expr_train_seconds = 0;

    const corpus::Corpus& corpus() {
        if (!corpus_) {
            std::fprintf(stderr, "  [artifacts] generating corpus (C=%zu)\n", cfg.corpus.classes);
            corpus_ = corpus::generate_corpus(cfg.corpus, cfg.model, cfg.seed);
        }
        return *corpus_;
    }
    const face::FaceBasis& basis() {
        if (!basis_)
            basis_ = face::make_synthetic_basis(300, 60, cfg.model.expr_dim, 20, cfg.model.lower_dim,
                                                Rng(cfg.seed).spawn(7).next_u64());
        return *basis_;
    }
    std::size_t steps_per_epoch() {
        return std::max<std::size_t>(1, corpus().split_ids(false).size() / cfg.train.batch);
    }

    train::PoseBranch train_pose(const std::function<void(TrainConfig&)>& mod, const char* tag) {
        RunConfig c = cfg;
        mod(c.train);
        std::fprintf(stderr, "  [artifacts] training pose branch (%s)\n", tag);
        Rng rng(c.seed);
        train::PoseBranch b(c, rng);
        b.set_channel_stats(corpus());
        train::Adam og(c.train), od(c.train);
        train::train_pose_branch(b, og, od, corpus(), 0, c.train.epochs, steps_per_epoch(), log_epoch);
        return b;
    }
    train::PoseBranch& pose() {
        if (!pose_full) {
            const auto t0 = Clock::now();
            pose_full.emplace(train_pose([](TrainConfig&) {}, "full"));
            pose_train_seconds = seconds_since(t0);
        }
        return *pose_full;
    }
    train::PoseBranch& pose_no_set() {
        if (!pose_noset) pose_noset.emplace(train_pose([](TrainConfig& t) { t.no_set = true; }, "w/o SET"));
        return *pose_noset;
    }
    train::PoseBranch& pose_sdt_tf() {
        if (!pose_tf) pose_tf.emplace(train_pose([](TrainConfig& t) { t.decoder = "sdt-tf"; }, "w/ SDT-TF"));
        return *pose_tf;
    }

    train::SyncModel& sync() {
        if (!sync_) {
            std::fprintf(stderr, "  [artifacts] pretraining sync discriminator\n");
            Rng rng(cfg.seed);
            sync_.emplace(cfg, basis(), rng);
            train::Adam opt(cfg.train);
            train::pretrain_sync(*sync_, opt, corpus(), 800, steps_per_epoch(), nullptr);
            Rng erng = Rng(cfg.seed).spawn(991);
            sync_auc_holdout = train::sync_auc(*sync_, corpus(), /*holdout=*/true, 400, erng);
            std::fprintf(stderr, "  [artifacts] sync holdout AUC %.4f\n", sync_auc_holdout);
        }
        return *sync_;
    }
    train::StyleClfModel& clf() {
        if (!clf_) {
            std::fprintf(stderr, "  [artifacts] pretraining style classifier\n");
            Rng rng(cfg.seed);
            clf_.emplace(cfg, rng);
            train::Adam opt(cfg.train);
            train::pretrain_style_clf(*clf_, opt, corpus(), cfg.train.clip_len, 8, steps_per_epoch(), log_epoch);
        }
        return *clf_;
    }
    train::ExprBranch& expr() {
        if (!expr_) {
            auto& sy = sync();
            auto& cl = clf();
            std::fprintf(stderr, "  [artifacts] training expression branch\n");
            const auto t0 = Clock::now();
            auto cols = face::mouth_columns(basis(), cfg.model.lower_dim);
            Rng rng(cfg.seed);
            expr_.emplace(cfg, cols, rng);
            expr_->set_channel_stats(corpus());
            train::Adam og(cfg.train), od(cfg.train);
            train::train_expr_branch(*expr_, sy, cl, og, od, corpus(), 0, cfg.train.epochs, steps_per_epoch(),
                                     log_epoch);
            expr_train_seconds = seconds_since(t0);
        }
        return *expr_;
    }
};

// ---- criterion 1: gradient fidelity --------------------------------------

Outcome criterion1() {
    const auto t0 = Clock::now();
    auto results = gradsuite::run_all(10, 1e-4);
    const double dt = seconds_since(t0);
    std::size_t failed = 0;
    double worst = 0;
    for (const auto& r : results) {
        worst = std::max(worst, r.max_rel_err);
        if (!r.pass) {
            ++failed;
            std::fprintf(stderr, "  grad FAIL %s seed %llu rel %.3e\n", r.block.c_str(),
                         (unsigned long long)r.seed, r.max_rel_err);
        }
    }
    const bool pass = failed == 0 && dt <= 120.0;
    return {1, pass,
            fmt("gradient fidelity: %zu checks, %zu failed, worst rel err %.2e, %.1f s (limit 120 s)",
                results.size(), failed, worst, dt)};
}

// ---- criterion 2: hyperparameter snapshot --------------------------------

Outcome criterion2() {
    RunConfig d;
    std::vector<std::string> bad;
    auto eq = [&](bool ok, const char* name) {
        if (!ok) bad.push_back(name);
    };
    eq(d.loss.gamma == 5.0, "gamma");
    eq(d.loss.lambda_h_rec == 100.0 && d.loss.lambda_h_trip == 1.0 && d.loss.lambda_h_tem == 10.0 &&
           d.loss.lambda_h_style == 10.0,
       "lambda_h");
    eq(d.loss.lambda_d_rec == 88.0 && d.loss.lambda_d_trip == 1.0 && d.loss.lambda_d_sync == 1.0 &&
           d.loss.lambda_d_tem == 1.0 && d.loss.lambda_d_style == 1.0,
       "lambda_d");
    eq(d.loss.mu == 0.1, "mu");
    eq(d.model.experts == 8, "K");
    eq(d.model.memory == 128, "memory");
    eq(d.model.hidden == 256, "hidden");
    eq(d.model.acoustic_dim == 164, "acoustic_dim");
    eq(d.model.lower_dim == 13 && d.model.upper_dim == 51, "expr split 13/51");
    eq(d.model.pose_dim == 6, "pose_dim");
    eq(d.train.clip_len == 64, "L");
    eq(d.train.pose_train_len == 256, "pose_train_len");
    eq(d.train.lr_initial == 1e-4 && d.train.lr_final == 2e-6 && d.train.lr_decay_epochs == 100, "lr schedule");
    std::string detail = "hyperparameter snapshot: defaults equal published values";
    if (!bad.empty()) {
        detail = "hyperparameter snapshot: mismatch in";
        for (auto& b : bad) detail += " " + b;
    }
    return {2, bad.empty(), detail};
}

// ---- criterion 3: memory-recurrence oracle -------------------------------

Outcome criterion3() {
    Rng rng(42);
    ParamStore<double> ps;
    const std::size_t d = 16, T = 300, cap = 128;
    nn::XlDecoder<double> dec(ps, "xl", 2, d, 2, 32, cap, rng);

    std::vector<TensorD> inputs;
    for (std::size_t t = 0; t < T; ++t) {
        TensorD x({1, d});
        for (auto& v : x.data) v = rng.normal(0.0, 0.5);
        inputs.push_back(x);
    }

    NoGradGuard ng;
    auto st = dec.make_state();
    std::vector<TensorD> stepped;
    for (auto& x : inputs) stepped.push_back(dec.step(st, Value<double>(x)).val());

    // Truncated full-context recompute: at each step, one fused attention
    // call per layer over the last (memory + 1) layer inputs.
    double worst = 0;
    std::vector<std::vector<TensorD>> hist(dec.layers.size());
    for (std::size_t t = 0; t < T; ++t) {
        Value<double> x(inputs[t]);
        for (std::size_t li = 0; li < dec.layers.size(); ++li) {
            auto& layer = dec.layers[li];
            hist[li].push_back(x.val());
            const std::size_t ctx = std::min(hist[li].size(), cap + 1);
            const std::size_t begin = hist[li].size() - ctx;
            TensorD all({ctx, d});
            for (std::size_t j = 0; j < ctx; ++j)
                std::copy(hist[li][begin + j].data.begin(), hist[li][begin + j].data.end(),
                          all.data.begin() + j * d);
            Value<double> c(all);
            auto attn = layer.attn.wo(
                mha_attention(layer.attn.wq(x), layer.attn.wk(c), layer.attn.wv(c), layer.attn.heads, 1, 1, ctx));
            auto h = layer.ln1(add(x, attn));
            x = layer.ln2(add(h, layer.ffn(h)));
        }
        for (std::size_t cidx = 0; cidx < d; ++cidx)
            worst = std::max(worst, std::abs(x.val().data[cidx] - stepped[t].data[cidx]));
    }
    return {3, worst <= 1e-5, fmt("memory-recurrence oracle: T=300, memory %zu, max per-element diff %.2e (limit 1e-5)",
                                  cap, worst)};
}

// ---- criterion 4: style-space clustering ---------------------------------

template <typename Branch>
void holdout_codes(Branch& b, const corpus::Corpus& c, bool pose_flavor, std::size_t clip_len,
                   std::vector<TensorF>& codes, std::vector<int>& labels) {
    NoGradGuard ng;
    for (std::size_t id : c.split_ids(true)) {
        const auto& u = c.utterances[id];
        const TensorF& seq = pose_flavor ? u.pose : u.expr;
        const std::size_t L = std::min(clip_len, u.length());
        for (std::size_t start : {std::size_t(0), u.length() - L}) {
            codes.push_back(b.encode_style(first_rows(seq, start, L)).val());
            labels.push_back(u.style);
        }
    }
}

Outcome criterion4(Artifacts& art) {
    auto& pb = art.pose();
    auto& eb = art.expr();
    std::vector<TensorF> pc, ec;
    std::vector<int> pl, el;
    holdout_codes(pb, art.corpus(), true, art.cfg.corpus.pose_clip_max, pc, pl);
    holdout_codes(eb, art.corpus(), false, art.cfg.corpus.expr_clip_max, ec, el);
    const double rp = train::intra_inter_ratio(pc, pl);
    const double re = train::intra_inter_ratio(ec, el);
    const bool budget = art.pose_train_seconds <= 1800.0 && art.expr_train_seconds <= 1800.0;
    const bool pass = rp <= 0.7 && re <= 0.7 && budget;
    return {4, pass,
            fmt("style clustering: intra/inter ratio pose %.3f, expr %.3f (limit 0.7); training %.0f s / %.0f s "
                "(limit 1800 s each)",
                rp, re, art.pose_train_seconds, art.expr_train_seconds)};
}

// ---- criterion 5: ablation ordering --------------------------------------

Outcome criterion5(Artifacts& art) {
    Rng r1 = Rng(art.cfg.seed).spawn(551), r2 = Rng(art.cfg.seed).spawn(552), r3 = Rng(art.cfg.seed).spawn(553);
    const double s_full =
        train::evaluate(&art.pose(), nullptr, nullptr, art.corpus(), art.basis(), true, 16, r1).pose_ssim;
    const double s_noset =
        train::evaluate(&art.pose_no_set(), nullptr, nullptr, art.corpus(), art.basis(), true, 16, r2).pose_ssim;
    const double s_tf =
        train::evaluate(&art.pose_sdt_tf(), nullptr, nullptr, art.corpus(), art.basis(), true, 16, r3).pose_ssim;
    const bool pass = s_full > s_noset && s_noset > s_tf && s_full >= 0.6;
    return {5, pass,
            fmt("ablation ordering: pose SSIM full %.3f > w/o SET %.3f > w/ SDT-TF %.3f, full >= 0.6", s_full,
                s_noset, s_tf)};
}

// ---- criterion 6: style responsiveness -----------------------------------

Outcome criterion6(Artifacts& art) {
    auto& pb = art.pose();
    auto& eb = art.expr();
    const auto& c = art.corpus();
    auto train_ids = c.split_ids(false);

    // First two train utterances of each class.
    std::vector<std::vector<std::size_t>> by_class(c.classes());
    for (std::size_t id : train_ids)
        if (by_class[c.utterances[id].style].size() < 2) by_class[c.utterances[id].style].push_back(id);

    NoGradGuard ng;
    double num_p = 0, den_p = 0, num_e = 0, den_e = 0;
    std::size_t pairs = 0;
    for (std::size_t k = 0; k + 1 < c.classes(); k += 2) {
        const auto &ca = by_class[k], &cb = by_class[k + 1];
        if (ca.size() < 2 || cb.empty()) continue;
        const auto& drive = c.utterances[ca[0]];

        // pose branch: same audio, three codes
        const std::size_t pl = std::min(drive.length(), art.cfg.corpus.pose_clip_max);
        auto code_p = [&](std::size_t id) {
            const auto& u = c.utterances[id];
            const std::size_t L = std::min(u.length(), art.cfg.corpus.pose_clip_max);
            return pb.encode_style(first_rows(u.pose, 0, L));
        };
        corpus::Clip clip{ca[0], 0, std::min(drive.length(), art.cfg.train.pose_train_len)};
        auto g_a1 = pb.generate(drive, clip, code_p(ca[0]), false).val();
        auto g_a2 = pb.generate(drive, clip, code_p(ca[1]), false).val();
        auto g_b = pb.generate(drive, clip, code_p(cb[0]), false).val();
        num_p += mean_frame_distance(g_a1, g_b);
        den_p += mean_frame_distance(g_a1, g_a2);
        (void)pl;

        // expression branch: same phonemes, three codes
        auto code_e = [&](std::size_t id) {
            const auto& u = c.utterances[id];
            const std::size_t L = std::min(u.length(), art.cfg.corpus.expr_clip_max);
            return eb.encode_style(first_rows(u.expr, 0, L));
        };
        TensorI ph = label_rows(drive.phonemes, 0, std::min(drive.length(), art.cfg.train.clip_len));
        auto e_a1 = eb.generate(ph, code_e(ca[0])).val();
        auto e_a2 = eb.generate(ph, code_e(ca[1])).val();
        auto e_b = eb.generate(ph, code_e(cb[0])).val();
        num_e += mean_frame_distance(e_a1, e_b);
        den_e += mean_frame_distance(e_a1, e_a2);
        ++pairs;
    }
    const double rp = num_p / std::max(den_p, 1e-12), re = num_e / std::max(den_e, 1e-12);
    const bool pass = pairs > 0 && rp >= 5.0 && re >= 5.0;
    return {6, pass,
            fmt("style responsiveness: cross-style / same-style distance ratio pose %.2fx, expr %.2fx (limit 5x, %zu "
                "class pairs)",
                rp, re, pairs)};
}

// ---- criterion 7: sync discriminator -------------------------------------

Outcome criterion7(Artifacts& art) {
    auto& sy = art.sync();
    auto& eb = art.expr();
    const auto& c = art.corpus();
    NoGradGuard ng;
    double gen_p = 0, gt_p = 0;
    std::size_t n = 0;
    for (std::size_t id : c.split_ids(true)) {
        const auto& u = c.utterances[id];
        const std::size_t L = std::min(u.length(), art.cfg.train.clip_len);
        const std::size_t sl = std::min(u.length(), art.cfg.corpus.expr_clip_max);
        auto s = eb.encode_style(first_rows(u.expr, 0, sl));
        TensorI ph = label_rows(u.phonemes, 0, L);
        auto gen = eb.generate(ph, s).val();
        gen_p += train::mean_sync_prob(sy, gen, ph);
        gt_p += train::mean_sync_prob(sy, first_rows(u.expr, 0, L), ph);
        ++n;
    }
    gen_p /= double(n);
    gt_p /= double(n);
    const double gap = std::abs(gen_p - gt_p);
    const bool pass = art.sync_auc_holdout >= 0.9 && gap <= 0.1;
    return {7, pass,
            fmt("sync discriminator: holdout AUC %.3f (limit 0.9); mean P_sync generated %.3f vs ground truth %.3f "
                "(gap %.3f, limit 0.1)",
                art.sync_auc_holdout, gen_p, gt_p, gap)};
}

// ---- criterion 8: interpolation continuity -------------------------------

Outcome criterion8(Artifacts& art) {
    auto& eb = art.expr();
    const auto& c = art.corpus();
    auto hold = c.split_ids(true);
    const auto& ua = c.utterances[hold.front()];
    const auto& ub = c.utterances[hold.back()];
    NoGradGuard ng;
    const std::size_t L = std::min(ua.length(), art.cfg.train.clip_len);
    TensorI ph = label_rows(ua.phonemes, 0, L);
    TensorF code_a = eb.encode_style(first_rows(ua.expr, 0, std::min(ua.length(), art.cfg.corpus.expr_clip_max))).val();
    TensorF code_b = eb.encode_style(first_rows(ub.expr, 0, std::min(ub.length(), art.cfg.corpus.expr_clip_max))).val();

    TensorF pure_a = eb.generate(ph, Value<float>(code_a)).val();
    TensorF pure_b = eb.generate(ph, Value<float>(code_b)).val();

    std::vector<TensorF> outs;
    for (int i = 0; i < 11; ++i) {
        TensorF s = style::interpolate_styles(code_a, code_b, double(i) / 10.0);
        outs.push_back(eb.generate(ph, Value<float>(s)).val());
    }
    const bool endpoints = outs.front().data == pure_a.data && outs.back().data == pure_b.data;
    double mean_step = 0, max_step = 0;
    for (int i = 1; i < 11; ++i) {
        const double d = mean_frame_distance(outs[i], outs[i - 1]);
        mean_step += d / 10.0;
        max_step = std::max(max_step, d);
    }
    const bool pass = endpoints && max_step <= 3.0 * mean_step;
    return {8, pass,
            fmt("interpolation: endpoints %s, max step %.4f vs 3x mean step %.4f over 11-point grid",
                endpoints ? "exact" : "NOT exact", max_step, 3.0 * mean_step)};
}

// ---- criterion 9: determinism & persistence ------------------------------

Outcome criterion9() {
    std::vector<std::string> bad;
    const fs::path tmp = fs::temp_directory_path() / "sm_accept9";
    fs::create_directories(tmp);

    // MTF round-trip byte-exact.
    {
        Rng r(5);
        TensorF t({7, 5});
        for (auto& v : t.data) v = float(r.normal());
        write_mtf(tmp / "a.mtf", t);
        auto back = read_mtf<float>(tmp / "a.mtf");
        write_mtf(tmp / "b.mtf", back);
        if (read_bytes(tmp / "a.mtf") != read_bytes(tmp / "b.mtf")) bad.push_back("mtf round-trip");
    }

    // Tiny run config shared by the remaining checks.
    RunConfig cfg = accept_cfg();
    cfg.model.hidden = 16;
    cfg.model.ffn_hidden = 24;
    cfg.model.style_dim = 16;
    cfg.model.adaptive_hidden = 20;
    cfg.model.memory = 8;
    cfg.corpus.classes = 2;
    cfg.corpus.utt_per_class = 5;
    cfg.corpus.utt_len = 80;
    cfg.corpus.expr_clip_min = 12;
    cfg.corpus.expr_clip_max = 24;
    cfg.corpus.pose_clip_min = 16;
    cfg.corpus.pose_clip_max = 32;
    cfg.train.batch = 2;
    cfg.train.epochs = 2;
    cfg.train.pose_train_len = 20;
    auto c = corpus::generate_corpus(cfg.corpus, cfg.model, 31);

    // Seeded runs bit-identical: corpus generation and fresh-model forward.
    {
        auto c2 = corpus::generate_corpus(cfg.corpus, cfg.model, 31);
        if (c.utterances[0].pose.data != c2.utterances[0].pose.data ||
            c.utterances[0].acoustics.data != c2.utterances[0].acoustics.data)
            bad.push_back("corpus determinism");
        Rng ra(cfg.seed), rb(cfg.seed);
        train::PoseBranch b1(cfg, ra), b2(cfg, rb);
        b1.set_channel_stats(c);
        b2.set_channel_stats(c);
        NoGradGuard ng;
        corpus::Clip clip{0, 0, 20};
        auto s1 = b1.encode_style(first_rows(c.utterances[0].pose, 0, 20));
        auto s2 = b2.encode_style(first_rows(c.utterances[0].pose, 0, 20));
        auto g1 = b1.generate(c.utterances[0], clip, s1, false).val();
        auto g2 = b2.generate(c.utterances[0], clip, s2, false).val();
        if (g1.data != g2.data) bad.push_back("seeded end-to-end generation");
    }

    // Checkpoint save -> load -> save byte-exact; resume equivalence.
    {
        Rng rng(cfg.seed);
        train::PoseBranch b(cfg, rng);
        b.set_channel_stats(c);
        train::Adam og(cfg.train), od(cfg.train);
        train::train_pose_branch(b, og, od, c, 0, 2, 3);
        auto ck = b.to_checkpoint(2, og, od);
        ck.save(tmp / "c1.ckpt");
        Checkpoint::load(tmp / "c1.ckpt").save(tmp / "c2.ckpt");
        if (read_bytes(tmp / "c1.ckpt") != read_bytes(tmp / "c2.ckpt")) bad.push_back("checkpoint round-trip");

        // Uninterrupted 0..2 vs 0..1 + save/load + 1..2.
        Rng rng1(cfg.seed);
        train::PoseBranch b1(cfg, rng1);
        b1.set_channel_stats(c);
        train::Adam og1(cfg.train), od1(cfg.train);
        train::train_pose_branch(b1, og1, od1, c, 0, 1, 3);
        b1.to_checkpoint(1, og1, od1).save(tmp / "half.ckpt");
        train::Adam og2(cfg.train), od2(cfg.train);
        auto b2 = train::PoseBranch::load(Checkpoint::load(tmp / "half.ckpt"), og2, od2);
        train::train_pose_branch(b2, og2, od2, c, 1, 2, 3);
        bool same = true;
        for (auto& [name, v] : b.ps_g.all())
            if (b2.ps_g.at(name).val().data != v.val().data) same = false;
        for (auto& [name, v] : b.ps_d.all())
            if (b2.ps_d.at(name).val().data != v.val().data) same = false;
        if (!same) bad.push_back("resume equivalence");
    }

    std::string detail = "determinism & persistence: mtf/ckpt round-trips, seeded runs, resume equivalence all "
                         "bit-exact";
    if (!bad.empty()) {
        detail = "determinism & persistence: FAILED";
        for (auto& b : bad) detail += " [" + b + "]";
    }
    return {9, bad.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> sel;
    for (int i = 1; i < argc; ++i) sel.insert(std::atoi(argv[i]));
    auto want = [&](int i) { return sel.empty() || sel.count(i) > 0; };

    Artifacts art;
    std::vector<Outcome> results;
    if (want(1)) results.push_back(criterion1());
    if (want(2)) results.push_back(criterion2());
    if (want(3)) results.push_back(criterion3());
    if (want(4)) results.push_back(criterion4(art));
    if (want(5)) results.push_back(criterion5(art));
    if (want(6)) results.push_back(criterion6(art));
    if (want(7)) results.push_back(criterion7(art));
    if (want(8)) results.push_back(criterion8(art));
    if (want(9)) results.push_back(criterion9());

    bool all = true;
    for (const auto& r : results) {
        std::printf("[%s] criterion %d: %s\n", r.pass ? "PASS" : "FAIL", r.id, r.detail.c_str());
        all = all && r.pass;
    }
    return all ? 0 : 1;
}
