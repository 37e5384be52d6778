#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sm/checkpoint.hpp"
#include "sm/config.hpp"
#include "sm/corpus.hpp"
#include "sm/expr.hpp"
#include "sm/face.hpp"
#include "sm/pose.hpp"
#include "sm/style.hpp"

namespace sm::train {

// ---- optimizer -----------------------------------------------------------

/// Adam with bias correction. A step whose gradients contain a non-finite
/// value is skipped entirely (and counted) rather than poisoning the
/// parameters. Moments are checkpointed next to the parameters.
struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::map<std::string, TensorF> m, v;
    std::size_t t = 0;
    std::size_t skipped = 0;

    Adam() = default;
    explicit Adam(const TrainConfig& tc) : beta1(tc.adam_beta1), beta2(tc.adam_beta2), eps(tc.adam_eps) {}

    void step(ParamStore<float>& ps, double lr);
    void to_checkpoint(Checkpoint& ck, const std::string& tag) const;
    void from_checkpoint(const Checkpoint& ck, const std::string& tag);
};

/// Linear decay from lr_initial to lr_final over lr_decay_epochs, constant
/// afterwards. `epoch` is zero-based.
double lr_at(const TrainConfig& tc, std::size_t epoch);

/// Deterministic per-epoch sampling stream: depends only on the run seed,
/// a branch tag, and the epoch index, so resuming at an epoch boundary
/// replays the identical sample sequence.
Rng epoch_rng(std::uint64_t seed, std::uint64_t branch_tag, std::size_t epoch);

inline constexpr std::uint64_t kPoseTag = 11, kExprTag = 12, kSyncTag = 13, kClfTag = 14;

// ---- parameter <-> checkpoint glue ---------------------------------------

void params_to_checkpoint(const ParamStore<float>& ps, Checkpoint& ck, const std::string& tag);
void params_from_checkpoint(ParamStore<float>& ps, const Checkpoint& ck, const std::string& tag);

// ---- model bundles -------------------------------------------------------

/// Head-pose branch: pose-flavor style encoder, input sequence encoder
/// (acoustic features, or phoneme labels for the input ablation), recurrent
/// decoder, temporal + style-conditional discriminators. Generator and
/// discriminator parameters live in separate stores so the two Adam
/// instances update disjoint sets.
struct PoseBranch {
    RunConfig cfg;
    ParamStore<float> ps_g, ps_d;
    style::StyleEncoder<float> es;
    pose::SeqEncoder<float> enc;
    pose::PoseDecoder<float> dec;
    nn::PatchDisc1D<float> disc_t, disc_s;
    TensorF chan_mean, chan_sd;  // pose channel stats for SSIM normalization

    PoseBranch(const RunConfig& cfg, Rng& rng);

    void set_channel_stats(const corpus::Corpus& c);
    Value<float> encode_style(const TensorF& pose_clip);
    /// One utterance clip -> generated pose sequence (raw coefficient scale).
    Value<float> generate(const corpus::Utterance& u, const corpus::Clip& clip, const Value<float>& s,
                          bool teacher_force);
    /// Direct-feature form used by the CLI: exactly one of acoustics
    /// (T x acoustic_dim) / phonemes (T labels) must match cfg.train.pose_input.
    Value<float> generate_seq(const TensorF* acoustics, const TensorI* phonemes, const Value<float>& s,
                              const TensorF& h_r, const TensorF* teacher = nullptr);

    Checkpoint to_checkpoint(std::size_t epoch, const Adam& og, const Adam& od) const;
    void from_checkpoint(const Checkpoint& ck, Adam& og, Adam& od);
    /// Rebuild a branch from a checkpoint alone (config travels inside).
    static PoseBranch load(const Checkpoint& ck, Adam& og, Adam& od);
};

/// Expression branch: expression-flavor style encoder, phoneme encoder,
/// style-as-query decoder with adaptive feed-forwards, temporal
/// discriminator. The sync discriminator and style classifier are separate
/// frozen models passed into the trainer.
struct ExprBranch {
    RunConfig cfg;
    ParamStore<float> ps_g, ps_d;
    style::StyleEncoder<float> es;
    pose::SeqEncoder<float> enc;  // phoneme label encoder
    expr::ExprDecoder<float> dec;
    nn::PatchDisc1D<float> disc_t;
    TensorF chan_mean, chan_sd;  // expression channel stats
    std::vector<std::size_t> mouth_cols;

    ExprBranch(const RunConfig& cfg, const std::vector<std::size_t>& mouth_cols, Rng& rng);

    void set_channel_stats(const corpus::Corpus& c);
    Value<float> encode_style(const TensorF& expr_clip);
    Value<float> generate(const TensorI& phonemes, const Value<float>& s);

    Checkpoint to_checkpoint(std::size_t epoch, const Adam& og, const Adam& od) const;
    void from_checkpoint(const Checkpoint& ck, Adam& og, Adam& od);
    /// Rebuild from a checkpoint alone; the mouth-column set travels as a
    /// buffer, so the face basis is not needed at load time.
    static ExprBranch load(const Checkpoint& ck, Adam& og, Adam& od);
};

/// Pretrained synchronization discriminator plus the constant mouth
/// geometry it scores against.
struct SyncModel {
    RunConfig cfg;
    ParamStore<float> ps;
    expr::SyncDiscriminator<float> disc;
    expr::MouthGeometry<float> geom;

    SyncModel(const RunConfig& cfg, const face::FaceBasis& basis, Rng& rng);

    Checkpoint to_checkpoint(std::size_t epoch, const Adam& opt) const;
    void from_checkpoint(const Checkpoint& ck, Adam* opt);
    /// Rebuild from a checkpoint alone; the mouth geometry travels as buffers.
    static SyncModel load(const Checkpoint& ck, Adam* opt = nullptr);
};

/// Pretrained expression style classifier.
struct StyleClfModel {
    RunConfig cfg;
    ParamStore<float> ps;
    expr::StyleClassifier<float> clf;

    StyleClfModel(const RunConfig& cfg, Rng& rng);

    Checkpoint to_checkpoint(std::size_t epoch, const Adam& opt) const;
    void from_checkpoint(const Checkpoint& ck, Adam* opt);
    static StyleClfModel load(const Checkpoint& ck, Adam* opt = nullptr);
};

// ---- training loops ------------------------------------------------------

struct EpochStats {
    std::size_t epoch = 0;
    double g_loss = 0, d_loss = 0, rec = 0, trip = 0;
    std::size_t steps = 0;
};
using EpochCallback = std::function<void(const EpochStats&)>;

/// Trains [start_epoch, end_epoch); the style-conditional discriminator
/// joins at cfg.train.epochs / 2. Returns per-epoch stats.
std::vector<EpochStats> train_pose_branch(PoseBranch& b, Adam& opt_g, Adam& opt_d, const corpus::Corpus& c,
                                          std::size_t start_epoch, std::size_t end_epoch, std::size_t steps_per_epoch,
                                          const EpochCallback& cb = {});

std::vector<EpochStats> train_expr_branch(ExprBranch& b, const SyncModel& sync, const StyleClfModel& clf, Adam& opt_g,
                                          Adam& opt_d, const corpus::Corpus& c, std::size_t start_epoch,
                                          std::size_t end_epoch, std::size_t steps_per_epoch,
                                          const EpochCallback& cb = {});

/// Binary real/desynchronized pretraining of the sync discriminator.
std::vector<EpochStats> pretrain_sync(SyncModel& s, Adam& opt, const corpus::Corpus& c, std::size_t epochs,
                                      std::size_t steps_per_epoch, const EpochCallback& cb = {});

std::vector<EpochStats> pretrain_style_clf(StyleClfModel& s, Adam& opt, const corpus::Corpus& c, std::size_t clip_len,
                                           std::size_t epochs, std::size_t steps_per_epoch,
                                           const EpochCallback& cb = {});

// ---- evaluation ----------------------------------------------------------

/// Held-out AUC of the sync discriminator over aligned vs desynchronized
/// (mouth, phoneme-window) pairs.
double sync_auc(const SyncModel& s, const corpus::Corpus& c, bool holdout, std::size_t samples, Rng& rng);

/// Mean P_sync = (cos + 1) / 2 of per-frame scores over the given clip.
double mean_sync_prob(const SyncModel& s, const TensorF& expr_clip, const TensorI& phonemes);

/// Held-out accuracy of the style classifier over random clips.
double style_clf_accuracy(const StyleClfModel& s, const corpus::Corpus& c, bool holdout, std::size_t clip_len,
                          std::size_t samples, Rng& rng);

/// Mean intra-class / mean inter-class pairwise style-code distance over
/// clips drawn from the given split. `codes_out` (optional) receives one
/// row per clip plus its class label.
double intra_inter_ratio(const std::vector<TensorF>& codes, const std::vector<int>& labels);

struct EvalMetrics {
    double pose_ssim = 0;     // generated vs ground-truth pose, normalized channels
    double expr_psnr = 0;     // generated vs ground-truth expression coefficients
    double f_lmd = 0;         // full-face landmark distance
    double m_lmd = 0;         // mouth landmark distance
    double sync_prob = 0;     // mean P_sync of generated expressions
    std::size_t utterances = 0;
};

EvalMetrics evaluate(PoseBranch* pb, ExprBranch* eb, const SyncModel* sync, const corpus::Corpus& c,
                     const face::FaceBasis& basis, bool holdout, std::size_t max_utts, Rng& rng);

/// Edge-replicate rows so a sequence reaches the discriminator's receptive
/// field.
Value<float> pad_rows_to(const Value<float>& x, std::size_t min_rows);

/// z-normalization helpers against stored channel stats.
TensorF channel_mean(const corpus::Corpus& c, bool pose);
TensorF channel_sd(const corpus::Corpus& c, bool pose, const TensorF& mean);

}  // namespace sm::train
