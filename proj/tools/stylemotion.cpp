// stylemotion: command-line surface for the coefficient-space talking-head
// pipeline. Subcommands cover corpus generation, discriminator pretraining,
// branch training, style encoding, synthesis, interpolation, evaluation and
// gradient verification. Every command exits 0 on success and nonzero with a
// machine-readable {"error": ...} JSON on stderr otherwise; --seed fully
// determines all outputs. Config precedence: defaults < --config file <
// explicit flags.
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sm/checkpoint.hpp"
#include "sm/config.hpp"
#include "sm/corpus.hpp"
#include "sm/face.hpp"
#include "sm/gradsuite.hpp"
#include "sm/io.hpp"
#include "sm/style.hpp"
#include "sm/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sm;

namespace {

RunConfig make_cfg(const CLI::App* sub, const std::string& config_path, std::uint64_t seed) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::load(config_path);
    if (sub->count("--seed")) cfg.seed = seed;
    return cfg;
}

corpus::Corpus data_corpus(const fs::path& data) { return corpus::load_corpus(data / "corpus"); }
face::FaceBasis data_basis(const fs::path& data) { return face::load_basis(data / "basis"); }

std::size_t default_steps(const corpus::Corpus& c, std::size_t batch) {
    const std::size_t n = c.split_ids(false).size();
    return std::max<std::size_t>(1, n / std::max<std::size_t>(1, batch));
}

void print_epoch(const train::EpochStats& st) {
    json j{{"epoch", st.epoch}, {"g_loss", st.g_loss}, {"d_loss", st.d_loss},
           {"rec", st.rec},     {"trip", st.trip},     {"steps", st.steps}};
    std::cout << j.dump() << std::endl;
}

TensorF first_rows(const TensorF& t, std::size_t n) {
    TensorF out({n, t.shape[1]});
    std::copy(t.data.begin(), t.data.begin() + static_cast<std::ptrdiff_t>(n * t.shape[1]), out.data.begin());
    return out;
}

/// A style argument may be a precomputed 1 x hidden code or a raw T x D
/// reference clip; clips are encoded with the branch's own encoder.
template <typename Branch>
TensorF resolve_style(Branch& b, std::size_t clip_width, const fs::path& file) {
    TensorF t = read_mtf<float>(file);
    if (t.shape.size() != 2 || t.shape[0] == 0)
        throw std::invalid_argument("style input must be a nonempty 2-D MTF: " + file.string());
    if (t.shape[0] == 1 && t.shape[1] == b.cfg.model.hidden) return t;  // already a code
    if (t.shape[1] != clip_width)
        throw std::invalid_argument("style clip width " + std::to_string(t.shape[1]) + " does not match branch input " +
                                    std::to_string(clip_width));
    NoGradGuard ng;
    return b.encode_style(t).val();
}

double mean_frame_distance(const TensorF& a, const TensorF& b) {
    if (a.shape != b.shape) throw std::invalid_argument("sequences must share shape for frame distances");
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

/// Top-2 principal components by power iteration with deflation; writes one
/// "x,y,label" row per style code.
void write_pca_csv(const std::vector<TensorF>& codes, const std::vector<int>& labels, const fs::path& file) {
    const std::size_t n = codes.size(), d = codes.empty() ? 0 : codes[0].numel();
    std::vector<double> x(n * d);
    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += codes[i].data[j] / double(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) x[i * d + j] = double(codes[i].data[j]) - mean[j];

    auto component = [&](std::uint64_t seed_id) {
        Rng r(1000 + seed_id);
        std::vector<double> v(d);
        for (auto& e : v) e = r.normal();
        std::vector<double> xv(n), v2(d);
        for (int it = 0; it < 300; ++it) {
            for (std::size_t i = 0; i < n; ++i) {
                double s = 0;
                for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * v[j];
                xv[i] = s;
            }
            std::fill(v2.begin(), v2.end(), 0.0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) v2[j] += x[i * d + j] * xv[i];
            double norm = 0;
            for (double e : v2) norm += e * e;
            norm = std::sqrt(norm);
            if (norm < 1e-12) break;
            for (std::size_t j = 0; j < d; ++j) v[j] = v2[j] / norm;
        }
        return v;
    };
    auto deflate = [&](const std::vector<double>& v) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0;
            for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * v[j];
            for (std::size_t j = 0; j < d; ++j) x[i * d + j] -= s * v[j];
        }
    };
    // Keep the original data for projection; deflation runs on a copy path:
    std::vector<double> x0 = x;
    auto v1 = component(1);
    deflate(v1);
    auto v2 = component(2);
    x = std::move(x0);

    std::ofstream f(file, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + file.string());
    f << "x,y,label\n";
    for (std::size_t i = 0; i < n; ++i) {
        double px = 0, py = 0;
        for (std::size_t j = 0; j < d; ++j) {
            px += x[i * d + j] * v1[j];
            py += x[i * d + j] * v2[j];
        }
        f << px << "," << py << "," << labels[i] << "\n";
    }
}

// ---- subcommands ----------------------------------------------------------

int cmd_gen_corpus(const RunConfig& cfg, const fs::path& out) {
    auto c = corpus::generate_corpus(cfg.corpus, cfg.model, cfg.seed);
    corpus::save_corpus(out / "corpus", c);
    const std::uint64_t basis_seed = Rng(cfg.seed).spawn(7).next_u64();
    auto basis = face::make_synthetic_basis(900, 404, cfg.model.expr_dim, 80, cfg.model.lower_dim, basis_seed);
    face::save_basis(out / "basis", basis);
    cfg.save(out / "config.json");
    json r{{"schema", 1},
           {"out", out.string()},
           {"classes", c.classes()},
           {"utterances", c.utterances.size()},
           {"holdout", c.split_ids(true).size()}};
    std::cout << r.dump() << "\n";
    return 0;
}

int cmd_pretrain_sync(const RunConfig& cfg, const fs::path& data, const fs::path& out, std::size_t epochs,
                      std::size_t steps) {
    auto c = data_corpus(data);
    auto basis = data_basis(data);
    Rng rng(cfg.seed);
    train::SyncModel s(cfg, basis, rng);
    train::Adam opt(cfg.train);
    if (steps == 0) steps = default_steps(c, cfg.train.batch);
    train::pretrain_sync(s, opt, c, epochs, steps, print_epoch);
    Rng erng = Rng(cfg.seed).spawn(991);
    const double auc = train::sync_auc(s, c, /*holdout=*/true, 400, erng);
    s.to_checkpoint(epochs, opt).save(out);
    std::cout << json{{"schema", 1}, {"auc", auc}, {"epochs", epochs}, {"checkpoint", out.string()}}.dump() << "\n";
    return 0;
}

int cmd_pretrain_style_clf(const RunConfig& cfg, const fs::path& data, const fs::path& out, std::size_t epochs,
                           std::size_t steps) {
    auto c = data_corpus(data);
    Rng rng(cfg.seed);
    train::StyleClfModel s(cfg, rng);
    train::Adam opt(cfg.train);
    if (steps == 0) steps = default_steps(c, cfg.train.batch);
    train::pretrain_style_clf(s, opt, c, cfg.train.clip_len, epochs, steps, print_epoch);
    Rng erng = Rng(cfg.seed).spawn(992);
    const double acc = train::style_clf_accuracy(s, c, /*holdout=*/true, cfg.train.clip_len, 200, erng);
    s.to_checkpoint(epochs, opt).save(out);
    std::cout << json{{"schema", 1}, {"accuracy", acc}, {"epochs", epochs}, {"checkpoint", out.string()}}.dump()
              << "\n";
    return 0;
}

void apply_train_flags(const CLI::App* sub, TrainConfig& tc, const std::string& decoder,
                       const std::string& pose_input) {
    auto set = [&](const char* name) {
        const auto* opt = sub->get_option_no_throw(name);
        return opt != nullptr && opt->count() > 0;
    };
    if (set("--decoder")) tc.decoder = decoder;
    if (set("--pose-input")) tc.pose_input = pose_input;
    if (set("--no-set")) tc.no_set = true;
    if (set("--no-style-disc")) tc.no_style_disc = true;
    if (set("--no-trip")) tc.no_trip = true;
    if (set("--no-tem")) tc.no_tem = true;
    if (set("--no-sync")) tc.no_sync = true;
}

int cmd_train_pose(const CLI::App* sub, const RunConfig& cfg, const fs::path& data, const fs::path& out,
                   const std::string& resume, std::size_t epochs_flag, std::size_t steps, const std::string& decoder,
                   const std::string& pose_input) {
    auto c = data_corpus(data);
    train::Adam og(cfg.train), od(cfg.train);
    std::size_t start = 0;
    std::optional<train::PoseBranch> b;
    if (!resume.empty()) {
        auto ck = Checkpoint::load(resume);
        b.emplace(train::PoseBranch::load(ck, og, od));
        start = ck.epoch;
    } else {
        Rng rng(cfg.seed);
        b.emplace(cfg, rng);
        b->set_channel_stats(c);
    }
    apply_train_flags(sub, b->cfg.train, decoder, pose_input);
    const std::size_t end = sub->count("--epochs") ? epochs_flag : b->cfg.train.epochs;
    if (steps == 0) steps = default_steps(c, b->cfg.train.batch);
    auto stats = train::train_pose_branch(*b, og, od, c, start, end, steps, print_epoch);
    b->to_checkpoint(end, og, od).save(out);
    json r{{"schema", 1}, {"checkpoint", out.string()}, {"epoch", end}};
    if (!stats.empty()) {
        r["g_loss"] = stats.back().g_loss;
        r["rec"] = stats.back().rec;
    }
    std::cout << r.dump() << "\n";
    return 0;
}

int cmd_train_expr(const CLI::App* sub, const RunConfig& cfg, const fs::path& data, const fs::path& out,
                   const std::string& resume, const std::string& sync_path, const std::string& clf_path,
                   std::size_t epochs_flag, std::size_t steps) {
    auto c = data_corpus(data);
    auto basis = data_basis(data);
    train::Adam og(cfg.train), od(cfg.train);
    std::size_t start = 0;
    std::optional<train::ExprBranch> b;
    if (!resume.empty()) {
        auto ck = Checkpoint::load(resume);
        b.emplace(train::ExprBranch::load(ck, og, od));
        start = ck.epoch;
    } else {
        auto cols = face::mouth_columns(basis, cfg.model.lower_dim);
        Rng rng(cfg.seed);
        b.emplace(cfg, cols, rng);
        b->set_channel_stats(c);
    }
    apply_train_flags(sub, b->cfg.train, "", "");
    if (clf_path.empty()) throw std::invalid_argument("missing pretrained style classifier checkpoint (--style-clf)");
    auto clf = train::StyleClfModel::load(Checkpoint::load(clf_path));
    std::optional<train::SyncModel> sync;
    if (!sync_path.empty()) {
        sync.emplace(train::SyncModel::load(Checkpoint::load(sync_path)));
    } else if (b->cfg.train.no_sync) {
        Rng rngd = Rng(b->cfg.seed).spawn(3);  // unused placeholder; the sync term is ablated
        sync.emplace(b->cfg, basis, rngd);
    } else {
        throw std::invalid_argument("missing pretrained sync discriminator checkpoint (--sync)");
    }
    const std::size_t end = sub->count("--epochs") ? epochs_flag : b->cfg.train.epochs;
    if (steps == 0) steps = default_steps(c, b->cfg.train.batch);
    auto stats = train::train_expr_branch(*b, *sync, clf, og, od, c, start, end, steps, print_epoch);
    b->to_checkpoint(end, og, od).save(out);
    json r{{"schema", 1}, {"checkpoint", out.string()}, {"epoch", end}};
    if (!stats.empty()) {
        r["g_loss"] = stats.back().g_loss;
        r["rec"] = stats.back().rec;
    }
    std::cout << r.dump() << "\n";
    return 0;
}

int cmd_encode_style(const std::string& ckpt, const std::string& branch, const fs::path& clip_path,
                     const fs::path& out) {
    auto ck = Checkpoint::load(ckpt);
    TensorF clip = read_mtf<float>(clip_path);
    if (clip.shape.size() != 2 || clip.shape[0] == 0)
        throw std::invalid_argument("style clip must be a nonempty T x D matrix");
    train::Adam og, od;
    TensorF code;
    if (branch == "pose") {
        auto b = train::PoseBranch::load(ck, og, od);
        NoGradGuard ng;
        code = b.encode_style(clip).val();
    } else if (branch == "expr") {
        auto b = train::ExprBranch::load(ck, og, od);
        NoGradGuard ng;
        code = b.encode_style(clip).val();
    } else {
        throw std::invalid_argument("--branch must be pose or expr");
    }
    write_mtf(out, code);
    json r{{"schema", 1}, {"branch", branch}, {"dim", code.shape[1]}, {"frames", clip.shape[0]},
           {"code", out.string()}};
    {
        std::ofstream f(out.string() + ".json", std::ios::trunc);
        f << r.dump(2) << "\n";
    }
    std::cout << r.dump() << "\n";
    return 0;
}

int cmd_synthesize(const std::string& pose_ckpt, const std::string& expr_ckpt, const std::string& audio,
                   const fs::path& phonemes, const fs::path& pose_style, const fs::path& expr_style,
                   const std::string& init_pose, const fs::path& out) {
    train::Adam a1, a2, a3, a4;
    auto pb = train::PoseBranch::load(Checkpoint::load(pose_ckpt), a1, a2);
    auto eb = train::ExprBranch::load(Checkpoint::load(expr_ckpt), a3, a4);

    TensorI ph = read_mtf<std::int32_t>(phonemes);
    const std::size_t T = ph.numel();
    if (T == 0) throw std::invalid_argument("length-zero phoneme input");
    TensorF ac;
    const TensorF* acp = nullptr;
    if (!audio.empty()) {
        ac = read_mtf<float>(audio);
        if (ac.shape.size() != 2 || ac.shape[0] != T)
            throw std::invalid_argument("audio features must be T x acoustic_dim aligned with the phonemes");
        acp = &ac;
    } else if (pb.cfg.train.pose_input == "acoustic") {
        throw std::invalid_argument("pose branch is acoustic-driven; --audio is required");
    }
    TensorF h_r = init_pose.empty() ? TensorF::zeros({1, pb.cfg.model.pose_dim}) : read_mtf<float>(init_pose);

    TensorF s_p = resolve_style(pb, pb.cfg.model.pose_dim, pose_style);
    TensorF s_e = resolve_style(eb, eb.cfg.model.expr_dim, expr_style);

    NoGradGuard ng;
    TensorF pose = pb.generate_seq(acp, &ph, Value<float>(s_p), h_r).val();
    TensorF expr = eb.generate(ph, Value<float>(s_e)).val();

    fs::create_directories(out);
    write_mtf(out / "expr.mtf", expr);
    write_mtf(out / "pose.mtf", pose);
    json r{{"schema", 1},
           {"frames", T},
           {"expr_dim", expr.shape[1]},
           {"pose_dim", pose.shape[1]},
           {"expr", "expr.mtf"},
           {"pose", "pose.mtf"}};
    {
        std::ofstream f(out / "report.json", std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write report.json");
        f << r.dump(2) << "\n";
    }
    std::cout << r.dump() << "\n";
    return 0;
}

int cmd_interpolate(const std::string& ckpt, const std::string& branch, const fs::path& style_a,
                    const fs::path& style_b, std::size_t steps, const std::string& audio, const std::string& phonemes,
                    const std::string& init_pose, const fs::path& out) {
    if (steps < 2) throw std::invalid_argument("interpolation requires at least 2 steps");
    train::Adam og, od;
    std::optional<train::PoseBranch> pb;
    std::optional<train::ExprBranch> eb;
    if (branch == "pose")
        pb.emplace(train::PoseBranch::load(Checkpoint::load(ckpt), og, od));
    else if (branch == "expr")
        eb.emplace(train::ExprBranch::load(Checkpoint::load(ckpt), og, od));
    else
        throw std::invalid_argument("--branch must be pose or expr");

    TensorI ph;
    TensorF ac;
    const TensorF* acp = nullptr;
    if (!phonemes.empty()) ph = read_mtf<std::int32_t>(phonemes);
    if (!audio.empty()) {
        ac = read_mtf<float>(audio);
        acp = &ac;
    }
    if (eb && ph.numel() == 0) throw std::invalid_argument("expression interpolation requires --phonemes");
    if (pb && pb->cfg.train.pose_input == "acoustic" && !acp)
        throw std::invalid_argument("pose branch is acoustic-driven; --audio is required");
    if (pb && pb->cfg.train.pose_input == "phoneme" && ph.numel() == 0)
        throw std::invalid_argument("pose branch is phoneme-driven; --phonemes is required");

    TensorF code_a, code_b;
    if (pb) {
        code_a = resolve_style(*pb, pb->cfg.model.pose_dim, style_a);
        code_b = resolve_style(*pb, pb->cfg.model.pose_dim, style_b);
    } else {
        code_a = resolve_style(*eb, eb->cfg.model.expr_dim, style_a);
        code_b = resolve_style(*eb, eb->cfg.model.expr_dim, style_b);
    }
    TensorF h_r;
    if (pb)
        h_r = init_pose.empty() ? TensorF::zeros({1, pb->cfg.model.pose_dim}) : read_mtf<float>(init_pose);

    fs::create_directories(out);
    std::vector<TensorF> outs(steps);
    std::vector<double> alphas(steps);
    for (std::size_t i = 0; i < steps; ++i) {
        alphas[i] = double(i) / double(steps - 1);
        TensorF s = style::interpolate_styles(code_a, code_b, alphas[i]);
        NoGradGuard ng;
        outs[i] = pb ? pb->generate_seq(acp, ph.numel() ? &ph : nullptr, Value<float>(s), h_r).val()
                     : eb->generate(ph, Value<float>(s)).val();
        char name[32];
        std::snprintf(name, sizeof(name), "step_%02zu.mtf", i);
        write_mtf(out / name, outs[i]);
    }
    double mean_step = 0, max_step = 0;
    {
        std::ofstream f(out / "distances.csv", std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write distances.csv");
        f << "index,alpha,step_distance,dist_to_first\n";
        for (std::size_t i = 0; i < steps; ++i) {
            const double sd = i ? mean_frame_distance(outs[i], outs[i - 1]) : 0.0;
            const double d0 = mean_frame_distance(outs[i], outs[0]);
            if (i) {
                mean_step += sd / double(steps - 1);
                max_step = std::max(max_step, sd);
            }
            f << i << "," << alphas[i] << "," << sd << "," << d0 << "\n";
        }
    }
    std::cout << json{{"schema", 1}, {"steps", steps}, {"mean_step", mean_step}, {"max_step", max_step}}.dump()
              << "\n";
    return 0;
}

int cmd_eval(const fs::path& data, const std::string& pose_ckpt, const std::string& expr_ckpt,
             const std::string& sync_ckpt, const std::string& split, std::size_t max_utts, const fs::path& out) {
    auto c = data_corpus(data);
    auto basis = data_basis(data);
    const bool holdout = split == "holdout";
    if (c.split_ids(holdout).empty()) throw std::invalid_argument("empty corpus split: " + split);

    train::Adam a1, a2, a3, a4;
    std::optional<train::PoseBranch> pb;
    std::optional<train::ExprBranch> eb;
    std::optional<train::SyncModel> sync;
    if (!pose_ckpt.empty()) pb.emplace(train::PoseBranch::load(Checkpoint::load(pose_ckpt), a1, a2));
    if (!expr_ckpt.empty()) eb.emplace(train::ExprBranch::load(Checkpoint::load(expr_ckpt), a3, a4));
    if (!sync_ckpt.empty()) sync.emplace(train::SyncModel::load(Checkpoint::load(sync_ckpt)));
    if (!pb && !eb) throw std::invalid_argument("eval requires at least one branch checkpoint");
    const RunConfig& cfg = eb ? eb->cfg : pb->cfg;

    Rng rng = Rng(cfg.seed).spawn(55);
    auto em = train::evaluate(pb ? &*pb : nullptr, eb ? &*eb : nullptr, sync ? &*sync : nullptr, c, basis, holdout,
                              max_utts, rng);

    // One style code per clip in the split (first clip_len frames of each
    // utterance), encoded with the expression encoder when available.
    std::vector<TensorF> codes;
    std::vector<int> labels;
    for (std::size_t id : c.split_ids(holdout)) {
        const auto& u = c.utterances[id];
        const std::size_t L = std::min<std::size_t>(cfg.train.clip_len, u.length());
        TensorF clip = first_rows(eb ? u.expr : u.pose, L);
        NoGradGuard ng;
        codes.push_back(eb ? eb->encode_style(clip).val() : pb->encode_style(clip).val());
        labels.push_back(u.style);
    }
    const double ratio = codes.size() >= 2 ? train::intra_inter_ratio(codes, labels) : 1.0;

    fs::create_directories(out);
    json m{{"schema", 1},
           {"ssim", em.pose_ssim},
           {"psnr", em.expr_psnr},
           {"f_lmd", em.f_lmd},
           {"m_lmd", em.m_lmd},
           {"intra_inter_ratio", ratio},
           {"sync_prob", em.sync_prob},
           {"utterances", em.utterances}};
    {
        std::ofstream f(out / "metrics.json", std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write metrics.json");
        f << m.dump(2) << "\n";
    }
    write_pca_csv(codes, labels, out / "pca.csv");
    std::cout << m.dump() << "\n";
    return 0;
}

int cmd_gradcheck(std::size_t seeds, double tol, const std::string& block) {
    std::vector<gradsuite::BlockResult> results;
    if (block.empty()) {
        results = gradsuite::run_all(seeds, tol);
    } else {
        for (std::uint64_t s = 1; s <= seeds; ++s) {
            auto rs = gradsuite::run_block(block, s, tol);
            results.insert(results.end(), rs.begin(), rs.end());
        }
    }
    std::size_t failed = 0;
    for (const auto& r : results) {
        if (!r.pass) ++failed;
        std::printf("%-18s seed %2llu  max_rel_err %.3e  %s\n", r.block.c_str(),
                    static_cast<unsigned long long>(r.seed), r.max_rel_err, r.pass ? "PASS" : "FAIL");
    }
    std::cout << json{{"schema", 1}, {"checks", results.size()}, {"failed", failed}, {"seeds", seeds}, {"tol", tol}}
                     .dump()
              << "\n";
    return failed ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stylemotion: style-controllable talking-head generation in 3DMM coefficient space"};
    app.require_subcommand(1);
    int rc = 0;

    struct Common {
        std::string config;
        std::uint64_t seed = 0;
    };
    auto add_common = [](CLI::App* sub, Common& o) {
        sub->add_option("--config", o.config, "JSON run config (unknown keys rejected)");
        sub->add_option("--seed", o.seed, "override the run seed");
    };

    // gen-corpus
    Common gco;
    std::string gc_out;
    std::size_t gc_classes = 0, gc_upc = 0, gc_len = 0;
    auto* gc = app.add_subcommand("gen-corpus", "generate the labeled synthetic corpus, face basis and config");
    add_common(gc, gco);
    gc->add_option("--out", gc_out, "output directory")->required();
    gc->add_option("--classes", gc_classes, "style classes");
    gc->add_option("--utt-per-class", gc_upc, "utterances per class");
    gc->add_option("--utt-len", gc_len, "frames per utterance");
    gc->callback([&] {
        RunConfig cfg = make_cfg(gc, gco.config, gco.seed);
        if (gc->count("--classes")) cfg.corpus.classes = gc_classes;
        if (gc->count("--utt-per-class")) cfg.corpus.utt_per_class = gc_upc;
        if (gc->count("--utt-len")) cfg.corpus.utt_len = gc_len;
        rc = cmd_gen_corpus(cfg, gc_out);
    });

    // pretrain-sync
    Common syo;
    std::string sy_data, sy_out;
    std::size_t sy_epochs = 0, sy_steps = 0;
    auto* sy = app.add_subcommand("pretrain-sync", "pretrain the audio-visual sync discriminator");
    add_common(sy, syo);
    sy->add_option("--data", sy_data, "gen-corpus output directory")->required();
    sy->add_option("--out", sy_out, "checkpoint path")->required();
    sy->add_option("--epochs", sy_epochs, "training epochs");
    sy->add_option("--steps", sy_steps, "batches per epoch (default: corpus size / batch)");
    sy->callback([&] {
        RunConfig cfg = make_cfg(sy, syo.config, syo.seed);
        const std::size_t ep = sy->count("--epochs") ? sy_epochs : cfg.train.epochs;
        rc = cmd_pretrain_sync(cfg, sy_data, sy_out, ep, sy_steps);
    });

    // pretrain-style-clf
    Common clo;
    std::string cl_data, cl_out;
    std::size_t cl_epochs = 0, cl_steps = 0;
    auto* cl = app.add_subcommand("pretrain-style-clf", "pretrain the expression style classifier");
    add_common(cl, clo);
    cl->add_option("--data", cl_data, "gen-corpus output directory")->required();
    cl->add_option("--out", cl_out, "checkpoint path")->required();
    cl->add_option("--epochs", cl_epochs, "training epochs");
    cl->add_option("--steps", cl_steps, "batches per epoch");
    cl->callback([&] {
        RunConfig cfg = make_cfg(cl, clo.config, clo.seed);
        const std::size_t ep = cl->count("--epochs") ? cl_epochs : cfg.train.epochs;
        rc = cmd_pretrain_style_clf(cfg, cl_data, cl_out, ep, cl_steps);
    });

    // train-pose
    Common tpo;
    std::string tp_data, tp_out, tp_resume, tp_decoder, tp_input;
    std::size_t tp_epochs = 0, tp_steps = 0;
    auto* tp = app.add_subcommand("train-pose", "train the head-pose branch");
    add_common(tp, tpo);
    tp->add_option("--data", tp_data, "gen-corpus output directory")->required();
    tp->add_option("--out", tp_out, "checkpoint path")->required();
    tp->add_option("--resume", tp_resume, "resume from this checkpoint");
    tp->add_option("--epochs", tp_epochs, "train until this epoch");
    tp->add_option("--steps", tp_steps, "batches per epoch");
    tp->add_option("--decoder", tp_decoder, "decoder variant: xl | sdt-tf | sdt-rr");
    tp->add_option("--pose-input", tp_input, "driving input: acoustic | phoneme");
    tp->add_flag("--no-set", "ablate the style-embedded token");
    tp->add_flag("--no-style-disc", "ablate the style discriminator");
    tp->add_flag("--no-trip", "ablate the triplet loss");
    tp->add_flag("--no-tem", "ablate the temporal discriminator");
    tp->callback([&] {
        RunConfig cfg = make_cfg(tp, tpo.config, tpo.seed);
        rc = cmd_train_pose(tp, cfg, tp_data, tp_out, tp_resume, tp_epochs, tp_steps, tp_decoder, tp_input);
    });

    // train-expr
    Common teo;
    std::string te_data, te_out, te_resume, te_sync, te_clf;
    std::size_t te_epochs = 0, te_steps = 0;
    auto* te = app.add_subcommand("train-expr", "train the expression branch");
    add_common(te, teo);
    te->add_option("--data", te_data, "gen-corpus output directory")->required();
    te->add_option("--out", te_out, "checkpoint path")->required();
    te->add_option("--resume", te_resume, "resume from this checkpoint");
    te->add_option("--sync", te_sync, "pretrained sync discriminator checkpoint");
    te->add_option("--style-clf", te_clf, "pretrained style classifier checkpoint");
    te->add_option("--epochs", te_epochs, "train until this epoch");
    te->add_option("--steps", te_steps, "batches per epoch");
    te->add_flag("--no-sync", "ablate the sync loss");
    te->add_flag("--no-trip", "ablate the triplet loss");
    te->add_flag("--no-tem", "ablate the temporal discriminator");
    te->callback([&] {
        RunConfig cfg = make_cfg(te, teo.config, teo.seed);
        rc = cmd_train_expr(te, cfg, te_data, te_out, te_resume, te_sync, te_clf, te_epochs, te_steps);
    });

    // encode-style
    std::string es_ckpt, es_branch, es_clip, es_out;
    auto* es = app.add_subcommand("encode-style", "encode a reference clip into a style code");
    es->add_option("--ckpt", es_ckpt, "branch checkpoint")->required();
    es->add_option("--branch", es_branch, "pose | expr")->required();
    es->add_option("--clip", es_clip, "reference clip MTF (T x D)")->required();
    es->add_option("--out", es_out, "output style-code MTF")->required();
    es->callback([&] { rc = cmd_encode_style(es_ckpt, es_branch, es_clip, es_out); });

    // synthesize
    std::string sz_pose, sz_expr, sz_audio, sz_ph, sz_pstyle, sz_estyle, sz_init, sz_out;
    auto* sz = app.add_subcommand("synthesize", "generate expression and pose coefficient sequences");
    sz->add_option("--pose-ckpt", sz_pose, "pose branch checkpoint")->required();
    sz->add_option("--expr-ckpt", sz_expr, "expression branch checkpoint")->required();
    sz->add_option("--audio", sz_audio, "acoustic features MTF (T x acoustic_dim)");
    sz->add_option("--phonemes", sz_ph, "phoneme labels MTF (T, int32)")->required();
    sz->add_option("--pose-style", sz_pstyle, "pose style clip or code MTF")->required();
    sz->add_option("--expr-style", sz_estyle, "expression style clip or code MTF")->required();
    sz->add_option("--init-pose", sz_init, "initial pose MTF (1 x 6); zeros if absent");
    sz->add_option("--out", sz_out, "output directory")->required();
    sz->callback([&] { rc = cmd_synthesize(sz_pose, sz_expr, sz_audio, sz_ph, sz_pstyle, sz_estyle, sz_init, sz_out); });

    // interpolate
    std::string ip_ckpt, ip_branch, ip_a, ip_b, ip_audio, ip_ph, ip_init, ip_out;
    std::size_t ip_steps = 11;
    auto* ip = app.add_subcommand("interpolate", "generate along a linear path between two style codes");
    ip->add_option("--ckpt", ip_ckpt, "branch checkpoint")->required();
    ip->add_option("--branch", ip_branch, "pose | expr")->required();
    ip->add_option("--style-a", ip_a, "first style clip or code MTF")->required();
    ip->add_option("--style-b", ip_b, "second style clip or code MTF")->required();
    ip->add_option("--steps", ip_steps, "number of interpolation points (>= 2)");
    ip->add_option("--audio", ip_audio, "acoustic features MTF");
    ip->add_option("--phonemes", ip_ph, "phoneme labels MTF");
    ip->add_option("--init-pose", ip_init, "initial pose MTF (pose branch)");
    ip->add_option("--out", ip_out, "output directory")->required();
    ip->callback([&] { rc = cmd_interpolate(ip_ckpt, ip_branch, ip_a, ip_b, ip_steps, ip_audio, ip_ph, ip_init, ip_out); });

    // eval
    std::string ev_data, ev_pose, ev_expr, ev_sync, ev_split = "holdout", ev_out;
    std::size_t ev_max = 16;
    auto* ev = app.add_subcommand("eval", "evaluate trained branches on a corpus split");
    ev->add_option("--data", ev_data, "gen-corpus output directory")->required();
    ev->add_option("--pose-ckpt", ev_pose, "pose branch checkpoint");
    ev->add_option("--expr-ckpt", ev_expr, "expression branch checkpoint");
    ev->add_option("--sync-ckpt", ev_sync, "sync discriminator checkpoint");
    ev->add_option("--split", ev_split, "holdout | train");
    ev->add_option("--max-utts", ev_max, "cap on evaluated utterances");
    ev->add_option("--out", ev_out, "output directory")->required();
    ev->callback([&] { rc = cmd_eval(ev_data, ev_pose, ev_expr, ev_sync, ev_split, ev_max, ev_out); });

    // gradcheck
    std::size_t gk_seeds = 10;
    double gk_tol = 1e-4;
    std::string gk_block;
    auto* gk = app.add_subcommand("gradcheck", "verify analytic gradients against finite differences (64-bit)");
    gk->add_option("--seeds", gk_seeds, "seeds per block");
    gk->add_option("--tol", gk_tol, "relative-error tolerance");
    gk->add_option("--block", gk_block, "check a single named block");
    gk->callback([&] { rc = cmd_gradcheck(gk_seeds, gk_tol, gk_block); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << json{{"error", std::string(e.what())}}.dump() << "\n";
        return e.get_exit_code() ? e.get_exit_code() : 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", std::string(e.what())}}.dump() << "\n";
        return 1;
    }
    return rc;
}
