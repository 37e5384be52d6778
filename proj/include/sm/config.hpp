#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace sm {

// Default values reproduce the published hyperparameters exactly; the
// acceptance suite snapshots them. Unknown keys in a config file are
// rejected rather than ignored.

struct ModelConfig {
    std::size_t hidden = 256;
    std::size_t heads = 8;
    std::size_t enc_layers = 3;
    std::size_t ffn_hidden = 1024;
    std::size_t style_dim = 256;
    std::size_t adaptive_hidden = 2048;
    std::size_t experts = 8;  // K
    std::size_t expert_attn_hidden = 64;
    std::size_t memory = 128;
    std::size_t pose_dec_layers = 2;
    std::size_t expr_dec_layers = 3;
    std::size_t acoustic_dim = 164;
    std::size_t pose_dim = 6;
    std::size_t expr_dim = 64;
    std::size_t lower_dim = 13;
    std::size_t upper_dim = 51;
    std::size_t phoneme_vocab = 41;  // 40 symbols + silence
    std::size_t context_half_window = 5;  // w
    std::size_t sync_embed = 128;
    std::size_t sync_window = 5;
    std::size_t disc_width = 64;  // patch discriminator base width (64/128/256/256)
};

struct LossConfig {
    double gamma = 5.0;  // triplet margin
    double mu = 0.1;     // L1 vs SSIM ratio in expression reconstruction
    double lambda_h_rec = 100.0;
    double lambda_h_trip = 1.0;
    double lambda_h_tem = 10.0;
    double lambda_h_style = 10.0;
    double lambda_d_rec = 88.0;
    double lambda_d_trip = 1.0;
    double lambda_d_sync = 1.0;
    double lambda_d_tem = 1.0;
    double lambda_d_style = 1.0;
    double ssim_c1 = 1e-4;  // (0.01 * R)^2 with R = 1 on normalized channels
    double ssim_c2 = 9e-4;  // (0.03 * R)^2
};

struct TrainConfig {
    double lr_initial = 1e-4;
    double lr_final = 2e-6;
    std::size_t lr_decay_epochs = 100;
    std::size_t epochs = 100;
    std::size_t batch = 8;
    std::size_t pose_train_len = 256;
    std::size_t clip_len = 64;  // L
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    // Ablation switches
    std::string decoder = "xl";  // xl | sdt-tf | sdt-rr
    bool no_set = false;
    bool no_style_disc = false;
    bool no_trip = false;
    bool no_tem = false;
    bool no_sync = false;
    std::string pose_input = "acoustic";  // acoustic | phoneme
};

struct CorpusConfig {
    std::size_t classes = 8;
    std::size_t utt_per_class = 200;
    std::size_t utt_len = 256;
    double separation = 0.35;  // delta_min between class motif parameters
    double coupling = 1.0;     // audio-energy coupling gain scale
    std::size_t expr_clip_min = 64, expr_clip_max = 256;
    std::size_t pose_clip_min = 128, pose_clip_max = 512;
    double holdout_fraction = 0.2;
};

struct RunConfig {
    std::uint64_t seed = 1234;
    ModelConfig model;
    LossConfig loss;
    TrainConfig train;
    CorpusConfig corpus;

    std::string to_json() const;
    static RunConfig from_json(const std::string& text);
    static RunConfig load(const std::filesystem::path& file);
    void save(const std::filesystem::path& file) const;
};

}  // namespace sm
