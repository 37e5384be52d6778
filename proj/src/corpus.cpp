#include "sm/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "sm/io.hpp"

namespace sm::corpus {

using nlohmann::json;

namespace {
constexpr double kTau = 2.0 * std::numbers::pi;

std::string utt_name(std::size_t id) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "utt_%05zu", id);
    return buf;
}
}  // namespace

TensorF viseme_table(std::size_t mouth_dim) {
    Rng rng(kVisemeTableSeed);
    TensorF table({kVisemeCount, mouth_dim});
    for (std::size_t p = 0; p < kVisemeCount; ++p) {
        // Each viseme is a distinct sparse-ish mouth pattern; unit-normalized
        // so per-class gains control the articulation amplitude directly.
        double norm = 0.0;
        for (std::size_t d = 0; d < mouth_dim; ++d) {
            double v = rng.normal();
            if (rng.uniform() < 0.4) v *= 0.1;  // sparsify
            table.at(p, d) = static_cast<float>(v);
            norm += v * v;
        }
        norm = std::sqrt(std::max(norm, 1e-12));
        for (std::size_t d = 0; d < mouth_dim; ++d) table.at(p, d) = static_cast<float>(table.at(p, d) / norm);
    }
    return table;
}

StyleSpec make_style_spec(int class_id, std::uint64_t seed, const CorpusConfig& cfg, std::size_t expr_dim) {
    if (class_id < 0 || static_cast<std::size_t>(class_id) >= cfg.classes)
        throw std::invalid_argument("class_id out of range");
    Rng rng = Rng(seed).spawn(0x5EC0 + static_cast<std::uint64_t>(class_id));
    StyleSpec s;
    s.class_id = class_id;
    const double c = static_cast<double>(class_id);
    const double step = cfg.separation;

    // Lattice parameters guarantee the delta_min margin between any two
    // classes; everything else is class-seeded colour.
    s.upper_amp = 0.25 + step * c;
    s.pose_amp[0] = 0.2 + step * c;

    s.upper_freq = 0.008 + 0.004 * rng.uniform();
    s.expr_offset = TensorF({expr_dim});
    double norm = 0.0;
    for (auto& x : s.expr_offset.data) {
        x = static_cast<float>(rng.normal());
        norm += static_cast<double>(x) * x;
    }
    norm = std::sqrt(std::max(norm, 1e-12));
    const double offset_mag = 0.4 + 0.5 * step * c;
    for (auto& x : s.expr_offset.data) x = static_cast<float>(x / norm * offset_mag);

    s.viseme_gain = TensorF({kVisemeCount});
    for (auto& g : s.viseme_gain.data) g = static_cast<float>(rng.uniform(0.5, 2.0));

    for (std::size_t ch = 0; ch < 6; ++ch) {
        if (ch > 0) s.pose_amp[ch] = 0.1 + 0.3 * rng.uniform();
        // Slow motifs (period >= ~100 frames): head motion drifts within a
        // training clip rather than oscillating, so the phase is pinned by
        // the initial pose and the style window.
        s.pose_freq[ch] = 0.003 + 0.007 * rng.uniform();
        s.pose_phase[ch] = rng.uniform(0.0, kTau);
    }
    s.couple_gain = cfg.coupling;
    return s;
}

Utterance synth_utterance(const StyleSpec& spec, std::size_t T, std::uint64_t seed, const ModelConfig& model) {
    if (T < 70) throw std::invalid_argument("utterance length must be >= 70 (discriminator receptive field)");
    Rng rng(seed);
    Utterance u;
    u.style = spec.class_id;
    u.seed = seed;

    // Phoneme track: random holds of 4-10 frames, ~15% silence.
    u.phonemes = TensorI({T});
    std::size_t t = 0;
    while (t < T) {
        const std::size_t hold = 4 + rng.uniform_int(7);
        const std::int32_t ph =
            rng.uniform() < 0.15 ? kSilenceId : static_cast<std::int32_t>(rng.uniform_int(kVisemeCount));
        for (std::size_t k = 0; k < hold && t < T; ++k, ++t) u.phonemes[t] = ph;
    }

    // Acoustics: dim 0 energy, dim 1 pitch, dims 2..2+vocab phoneme bank,
    // remainder seeded texture. Energy is gated by silence.
    const std::size_t ad = model.acoustic_dim;
    u.acoustics = TensorF({T, ad});
    const double e_freq = 0.010 + 0.006 * rng.uniform(), e_phase = rng.uniform(0.0, kTau);
    const double p_freq = 0.004 + 0.004 * rng.uniform(), p_phase = rng.uniform(0.0, kTau);
    std::vector<double> energy(T);
    for (std::size_t i = 0; i < T; ++i) {
        double e = 0.5 + 0.25 * std::sin(kTau * e_freq * static_cast<double>(i) + e_phase) + 0.02 * rng.normal();
        if (u.phonemes[i] == kSilenceId) e *= 0.25;
        energy[i] = e;
        u.acoustics.at(i, 0) = static_cast<float>(e);
        if (ad > 1)
            u.acoustics.at(i, 1) =
                static_cast<float>(0.4 + 0.2 * std::sin(kTau * p_freq * static_cast<double>(i) + p_phase));
        for (std::size_t d = 2; d < ad; ++d) {
            double v = 0.05 * rng.normal();
            const std::size_t bank = d - 2;
            if (bank < model.phoneme_vocab && static_cast<std::size_t>(u.phonemes[i]) == bank) v += 0.8;
            u.acoustics.at(i, d) = static_cast<float>(v);
        }
    }

    // Expression: mouth rows follow the viseme table scaled by class gains
    // (silence frames sit exactly at the rest offset); upper rows follow the
    // class's low-frequency oscillation.
    const std::size_t ed = model.expr_dim, lower = model.lower_dim;
    if (spec.expr_offset.numel() != ed) throw ShapeError("spec expr_offset does not match model expr_dim");
    const TensorF table = viseme_table(lower);
    u.expr = TensorF({T, ed});
    std::vector<double> phase_d(ed);
    {
        Rng prng = Rng(0x0D0E).spawn(static_cast<std::uint64_t>(spec.class_id));
        for (auto& p : phase_d) p = prng.uniform(0.0, kTau);
    }
    for (std::size_t i = 0; i < T; ++i) {
        const std::int32_t ph = u.phonemes[i];
        for (std::size_t d = 0; d < lower; ++d) {
            float v = spec.expr_offset[d];
            if (ph != kSilenceId) v += spec.viseme_gain[static_cast<std::size_t>(ph)] * table.at(static_cast<std::size_t>(ph), d);
            u.expr.at(i, d) = v;
        }
        for (std::size_t d = lower; d < ed; ++d) {
            const double w = 1.0 / (1.0 + 0.1 * static_cast<double>(d - lower));
            u.expr.at(i, d) = static_cast<float>(
                spec.expr_offset[d] +
                spec.upper_amp * w * std::sin(kTau * spec.upper_freq * static_cast<double>(i) + phase_d[d]));
        }
    }

    // Pose: class motif sinusoids plus energy-coupled nod. The coupling term
    // is scaled by the channel amplitude so the energy correlation survives
    // across the class lattice.
    u.pose = TensorF({T, 6});
    for (std::size_t i = 0; i < T; ++i) {
        const double e_hat = (energy[i] - 0.5) / 0.25;  // roughly unit scale
        for (std::size_t ch = 0; ch < 6; ++ch) {
            const double motif =
                std::sin(kTau * spec.pose_freq[ch] * static_cast<double>(i) + spec.pose_phase[ch]);
            const double couple = ch == 0 ? spec.couple_gain : 0.15 * spec.couple_gain;
            u.pose.at(i, ch) =
                static_cast<float>(spec.pose_amp[ch] * (0.4 * motif + couple * e_hat) + 0.01 * rng.normal());
        }
    }
    return u;
}

double pearson(const float* a, const float* b, std::size_t n, std::size_t stride_a, std::size_t stride_b) {
    double ma = 0, mb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        ma += a[i * stride_a];
        mb += b[i * stride_b];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double cov = 0, va = 0, vb = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double da = a[i * stride_a] - ma, db = b[i * stride_b] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    return cov / std::max(std::sqrt(va * vb), 1e-12);
}

Corpus generate_corpus(const CorpusConfig& cfg, const ModelConfig& model, std::uint64_t seed) {
    if (cfg.classes < 2) throw std::invalid_argument("corpus needs >= 2 style classes");
    Corpus corpus;
    corpus.cfg = cfg;
    corpus.seed = seed;
    for (std::size_t c = 0; c < cfg.classes; ++c)
        corpus.specs.push_back(make_style_spec(static_cast<int>(c), seed, cfg, model.expr_dim));

    const std::size_t total = cfg.classes * cfg.utt_per_class;
    corpus.utterances.resize(total);
    Rng base(seed);
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < total; ++i) {
        const std::size_t c = i / cfg.utt_per_class;
        const std::uint64_t useed = base.spawn(0xA770 + i).next_u64();
        corpus.utterances[i] = synth_utterance(corpus.specs[c], cfg.utt_len, useed, model);
    }
    // Holdout split: tail fraction of each class, deterministic.
    auto hold = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * static_cast<double>(cfg.utt_per_class)));
    // A positive fraction always reserves at least one held-out utterance
    // per class (given two or more) so evaluation splits are never empty.
    if (cfg.holdout_fraction > 0.0 && hold == 0 && cfg.utt_per_class >= 2) hold = 1;
    for (std::size_t c = 0; c < cfg.classes; ++c)
        for (std::size_t k = 0; k < cfg.utt_per_class; ++k)
            corpus.utterances[c * cfg.utt_per_class + k].holdout = k >= cfg.utt_per_class - hold;
    return corpus;
}

std::vector<std::size_t> Corpus::split_ids(bool holdout) const {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < utterances.size(); ++i)
        if (utterances[i].holdout == holdout) ids.push_back(i);
    return ids;
}

Triplet sample_triplet(const Corpus& corpus, const std::string& flavor, Rng& rng, bool train_only) {
    if (corpus.classes() < 2) throw std::invalid_argument("triplet sampling needs >= 2 classes");
    std::size_t lo, hi;
    if (flavor == "expr") {
        lo = corpus.cfg.expr_clip_min;
        hi = corpus.cfg.expr_clip_max;
    } else if (flavor == "pose") {
        lo = corpus.cfg.pose_clip_min;
        hi = corpus.cfg.pose_clip_max;
    } else {
        throw std::invalid_argument("triplet flavor must be expr | pose");
    }

    auto pool = corpus.split_ids(false);
    if (!train_only) {
        auto h = corpus.split_ids(true);
        pool.insert(pool.end(), h.begin(), h.end());
    }
    if (pool.empty()) throw std::runtime_error("empty utterance pool");

    auto pick_clip = [&](std::size_t utt) {
        const std::size_t T = corpus.utterances[utt].length();
        const std::size_t clo = std::min(lo, T), chi = std::min(hi, T);
        const std::size_t len = clo + rng.uniform_int(chi - clo + 1);
        const std::size_t start = rng.uniform_int(T - len + 1);
        return Clip{utt, start, len};
    };

    const std::size_t a = pool[rng.uniform_int(pool.size())];
    const int cls = corpus.utterances[a].style;
    Triplet tr;
    tr.anchor = pick_clip(a);
    if (flavor == "pose") {
        // Positive from a segment of the same utterance, near the anchor.
        tr.positive = pick_clip(a);
    } else {
        std::vector<std::size_t> same;
        for (auto id : pool)
            if (corpus.utterances[id].style == cls) same.push_back(id);
        tr.positive = pick_clip(same[rng.uniform_int(same.size())]);
    }
    std::vector<std::size_t> other;
    for (auto id : pool)
        if (corpus.utterances[id].style != cls) other.push_back(id);
    if (other.empty()) throw std::runtime_error("no negative class available");
    tr.negative = pick_clip(other[rng.uniform_int(other.size())]);
    return tr;
}

namespace {

json spec_to_json(const StyleSpec& s) {
    json j;
    j["class_id"] = s.class_id;
    j["expr_offset"] = s.expr_offset.data;
    j["viseme_gain"] = s.viseme_gain.data;
    j["upper_amp"] = s.upper_amp;
    j["upper_freq"] = s.upper_freq;
    j["pose_amp"] = s.pose_amp;
    j["pose_freq"] = s.pose_freq;
    j["pose_phase"] = s.pose_phase;
    j["couple_gain"] = s.couple_gain;
    return j;
}

StyleSpec spec_from_json(const json& j) {
    StyleSpec s;
    s.class_id = j.at("class_id").get<int>();
    auto eo = j.at("expr_offset").get<std::vector<float>>();
    const std::size_t ne = eo.size();
    s.expr_offset = TensorF({ne}, std::move(eo));
    auto vg = j.at("viseme_gain").get<std::vector<float>>();
    const std::size_t nv = vg.size();
    s.viseme_gain = TensorF({nv}, std::move(vg));
    s.upper_amp = j.at("upper_amp").get<double>();
    s.upper_freq = j.at("upper_freq").get<double>();
    s.pose_amp = j.at("pose_amp").get<std::array<double, 6>>();
    s.pose_freq = j.at("pose_freq").get<std::array<double, 6>>();
    s.pose_phase = j.at("pose_phase").get<std::array<double, 6>>();
    s.couple_gain = j.at("couple_gain").get<double>();
    return s;
}

}  // namespace

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
    std::filesystem::create_directories(dir);
    json man;
    man["version"] = 1;
    man["seed"] = corpus.seed;
    auto& c = man["config"];
    c["classes"] = corpus.cfg.classes;
    c["utt_per_class"] = corpus.cfg.utt_per_class;
    c["utt_len"] = corpus.cfg.utt_len;
    c["separation"] = corpus.cfg.separation;
    c["coupling"] = corpus.cfg.coupling;
    c["expr_clip_min"] = corpus.cfg.expr_clip_min;
    c["expr_clip_max"] = corpus.cfg.expr_clip_max;
    c["pose_clip_min"] = corpus.cfg.pose_clip_min;
    c["pose_clip_max"] = corpus.cfg.pose_clip_max;
    c["holdout_fraction"] = corpus.cfg.holdout_fraction;
    for (const auto& s : corpus.specs) man["classes"].push_back(spec_to_json(s));
    for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
        const auto& u = corpus.utterances[i];
        man["utterances"].push_back(
            {{"id", i}, {"class", u.style}, {"seed", u.seed}, {"len", u.length()}, {"holdout", u.holdout}});
    }
    {
        std::ofstream f(dir / "manifest.json", std::ios::trunc);
        if (!f) throw std::runtime_error("cannot write manifest");
        f << man.dump(2) << "\n";
    }
    for (std::size_t i = 0; i < corpus.utterances.size(); ++i) {
        const auto& u = corpus.utterances[i];
        const auto udir = dir / utt_name(i);
        std::filesystem::create_directories(udir);
        write_mtf(udir / "ph.mtf", u.phonemes);
        write_mtf(udir / "ac.mtf", u.acoustics);
        write_mtf(udir / "expr.mtf", u.expr);
        write_mtf(udir / "pose.mtf", u.pose);
    }
}

Corpus load_corpus(const std::filesystem::path& dir) {
    std::ifstream f(dir / "manifest.json");
    if (!f) throw std::runtime_error("cannot open manifest in " + dir.string());
    json man = json::parse(f);
    Corpus corpus;
    corpus.seed = man.at("seed").get<std::uint64_t>();
    const auto& c = man.at("config");
    corpus.cfg.classes = c.at("classes").get<std::size_t>();
    corpus.cfg.utt_per_class = c.at("utt_per_class").get<std::size_t>();
    corpus.cfg.utt_len = c.at("utt_len").get<std::size_t>();
    corpus.cfg.separation = c.at("separation").get<double>();
    corpus.cfg.coupling = c.at("coupling").get<double>();
    corpus.cfg.expr_clip_min = c.at("expr_clip_min").get<std::size_t>();
    corpus.cfg.expr_clip_max = c.at("expr_clip_max").get<std::size_t>();
    corpus.cfg.pose_clip_min = c.at("pose_clip_min").get<std::size_t>();
    corpus.cfg.pose_clip_max = c.at("pose_clip_max").get<std::size_t>();
    corpus.cfg.holdout_fraction = c.at("holdout_fraction").get<double>();
    for (const auto& js : man.at("classes")) corpus.specs.push_back(spec_from_json(js));
    for (const auto& ju : man.at("utterances")) {
        const auto udir = dir / utt_name(ju.at("id").get<std::size_t>());
        Utterance u;
        u.phonemes = read_mtf<std::int32_t>(udir / "ph.mtf");
        u.acoustics = read_mtf<float>(udir / "ac.mtf");
        u.expr = read_mtf<float>(udir / "expr.mtf");
        u.pose = read_mtf<float>(udir / "pose.mtf");
        u.style = ju.at("class").get<int>();
        u.seed = ju.at("seed").get<std::uint64_t>();
        u.holdout = ju.at("holdout").get<bool>();
        if (u.acoustics.shape[0] != u.length() || u.expr.shape[0] != u.length() || u.pose.shape[0] != u.length())
            throw std::runtime_error("sequence length mismatch in " + udir.string());
        corpus.utterances.push_back(std::move(u));
    }
    return corpus;
}

}  // namespace sm::corpus
