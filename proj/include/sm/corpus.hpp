#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "sm/config.hpp"
#include "sm/rng.hpp"
#include "sm/tensor.hpp"

namespace sm::corpus {

inline constexpr std::size_t kVisemeCount = 40;   // phoneme ids 0..39; id 40 is silence
inline constexpr std::int32_t kSilenceId = 40;
inline constexpr std::uint64_t kVisemeTableSeed = 424242;

/// Fixed 40 x mouth_dim viseme table (phoneme -> mouth coefficient pattern),
/// produced once from a seeded recipe and shipped alongside the corpus.
TensorF viseme_table(std::size_t mouth_dim = 13);

/// Per-class generator parameters. Classes are placed on a parameter lattice
/// so any two specs differ by at least `separation` in at least one motif
/// parameter; the remaining parameters are seeded per class.
struct StyleSpec {
    int class_id = 0;
    TensorF expr_offset;    // expr_dim rest offsets
    TensorF viseme_gain;    // kVisemeCount gains in [0.5, 2]
    double upper_amp = 0.0, upper_freq = 0.0;
    std::array<double, 6> pose_amp{}, pose_freq{}, pose_phase{};
    double couple_gain = 1.0;  // audio-energy -> pose coupling
};

struct Utterance {
    TensorI phonemes;   // T
    TensorF acoustics;  // T x acoustic_dim
    TensorF expr;       // T x expr_dim
    TensorF pose;       // T x 6
    int style = 0;
    std::uint64_t seed = 0;
    bool holdout = false;

    std::size_t length() const { return phonemes.numel(); }
};

struct Corpus {
    std::vector<StyleSpec> specs;
    std::vector<Utterance> utterances;
    CorpusConfig cfg;
    std::uint64_t seed = 0;

    std::size_t classes() const { return specs.size(); }
    std::vector<std::size_t> split_ids(bool holdout) const;
};

/// Windows into corpus utterances; triplets are returned by reference index
/// so no sequence data is copied.
struct Clip {
    std::size_t utt = 0;
    std::size_t start = 0;
    std::size_t len = 0;
};

struct Triplet {
    Clip anchor, positive, negative;
};

StyleSpec make_style_spec(int class_id, std::uint64_t seed, const CorpusConfig& cfg, std::size_t expr_dim = 64);
Utterance synth_utterance(const StyleSpec& spec, std::size_t T, std::uint64_t seed, const ModelConfig& model);

/// flavor: "expr" (clips 64-256) or "pose" (clips 128-512); ranges come from
/// the corpus config and are clamped to the utterance length.
Triplet sample_triplet(const Corpus& corpus, const std::string& flavor, Rng& rng, bool train_only = true);

Corpus generate_corpus(const CorpusConfig& cfg, const ModelConfig& model, std::uint64_t seed);
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
Corpus load_corpus(const std::filesystem::path& dir);

/// Pearson correlation of two equal-length series; used by tests and the
/// corpus self-check (pose channel 0 vs acoustic energy >= 0.5).
double pearson(const float* a, const float* b, std::size_t n, std::size_t stride_a = 1, std::size_t stride_b = 1);

}  // namespace sm::corpus
