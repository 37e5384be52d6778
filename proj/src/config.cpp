#include "sm/config.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace sm {

using nlohmann::json;

namespace {

void check_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (auto* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw std::invalid_argument("unknown config key \"" + where + "." + it.key() + "\"");
    }
}

template <typename T>
void get(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string RunConfig::to_json() const {
    json j;
    j["seed"] = seed;
    auto& m = j["model"];
    m["hidden"] = model.hidden;
    m["heads"] = model.heads;
    m["enc_layers"] = model.enc_layers;
    m["ffn_hidden"] = model.ffn_hidden;
    m["style_dim"] = model.style_dim;
    m["adaptive_hidden"] = model.adaptive_hidden;
    m["experts"] = model.experts;
    m["expert_attn_hidden"] = model.expert_attn_hidden;
    m["memory"] = model.memory;
    m["pose_dec_layers"] = model.pose_dec_layers;
    m["expr_dec_layers"] = model.expr_dec_layers;
    m["acoustic_dim"] = model.acoustic_dim;
    m["pose_dim"] = model.pose_dim;
    m["expr_dim"] = model.expr_dim;
    m["lower_dim"] = model.lower_dim;
    m["upper_dim"] = model.upper_dim;
    m["phoneme_vocab"] = model.phoneme_vocab;
    m["context_half_window"] = model.context_half_window;
    m["sync_embed"] = model.sync_embed;
    m["sync_window"] = model.sync_window;
    m["disc_width"] = model.disc_width;
    auto& l = j["loss"];
    l["gamma"] = loss.gamma;
    l["mu"] = loss.mu;
    l["lambda_h_rec"] = loss.lambda_h_rec;
    l["lambda_h_trip"] = loss.lambda_h_trip;
    l["lambda_h_tem"] = loss.lambda_h_tem;
    l["lambda_h_style"] = loss.lambda_h_style;
    l["lambda_d_rec"] = loss.lambda_d_rec;
    l["lambda_d_trip"] = loss.lambda_d_trip;
    l["lambda_d_sync"] = loss.lambda_d_sync;
    l["lambda_d_tem"] = loss.lambda_d_tem;
    l["lambda_d_style"] = loss.lambda_d_style;
    l["ssim_c1"] = loss.ssim_c1;
    l["ssim_c2"] = loss.ssim_c2;
    auto& t = j["train"];
    t["lr_initial"] = train.lr_initial;
    t["lr_final"] = train.lr_final;
    t["lr_decay_epochs"] = train.lr_decay_epochs;
    t["epochs"] = train.epochs;
    t["batch"] = train.batch;
    t["pose_train_len"] = train.pose_train_len;
    t["clip_len"] = train.clip_len;
    t["adam_beta1"] = train.adam_beta1;
    t["adam_beta2"] = train.adam_beta2;
    t["adam_eps"] = train.adam_eps;
    t["decoder"] = train.decoder;
    t["no_set"] = train.no_set;
    t["no_style_disc"] = train.no_style_disc;
    t["no_trip"] = train.no_trip;
    t["no_tem"] = train.no_tem;
    t["no_sync"] = train.no_sync;
    t["pose_input"] = train.pose_input;
    auto& c = j["corpus"];
    c["classes"] = corpus.classes;
    c["utt_per_class"] = corpus.utt_per_class;
    c["utt_len"] = corpus.utt_len;
    c["separation"] = corpus.separation;
    c["coupling"] = corpus.coupling;
    c["expr_clip_min"] = corpus.expr_clip_min;
    c["expr_clip_max"] = corpus.expr_clip_max;
    c["pose_clip_min"] = corpus.pose_clip_min;
    c["pose_clip_max"] = corpus.pose_clip_max;
    c["holdout_fraction"] = corpus.holdout_fraction;
    return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
    RunConfig cfg;
    json j = json::parse(text);
    check_keys(j, {"seed", "model", "loss", "train", "corpus"}, "");
    get(j, "seed", cfg.seed);
    if (j.contains("model")) {
        const auto& m = j["model"];
        check_keys(m,
                   {"hidden", "heads", "enc_layers", "ffn_hidden", "style_dim", "adaptive_hidden", "experts",
                    "expert_attn_hidden", "memory", "pose_dec_layers", "expr_dec_layers", "acoustic_dim", "pose_dim",
                    "expr_dim", "lower_dim", "upper_dim", "phoneme_vocab", "context_half_window", "sync_embed",
                    "sync_window", "disc_width"},
                   "model");
        get(m, "hidden", cfg.model.hidden);
        get(m, "heads", cfg.model.heads);
        get(m, "enc_layers", cfg.model.enc_layers);
        get(m, "ffn_hidden", cfg.model.ffn_hidden);
        get(m, "style_dim", cfg.model.style_dim);
        get(m, "adaptive_hidden", cfg.model.adaptive_hidden);
        get(m, "experts", cfg.model.experts);
        get(m, "expert_attn_hidden", cfg.model.expert_attn_hidden);
        get(m, "memory", cfg.model.memory);
        get(m, "pose_dec_layers", cfg.model.pose_dec_layers);
        get(m, "expr_dec_layers", cfg.model.expr_dec_layers);
        get(m, "acoustic_dim", cfg.model.acoustic_dim);
        get(m, "pose_dim", cfg.model.pose_dim);
        get(m, "expr_dim", cfg.model.expr_dim);
        get(m, "lower_dim", cfg.model.lower_dim);
        get(m, "upper_dim", cfg.model.upper_dim);
        get(m, "phoneme_vocab", cfg.model.phoneme_vocab);
        get(m, "context_half_window", cfg.model.context_half_window);
        get(m, "sync_embed", cfg.model.sync_embed);
        get(m, "sync_window", cfg.model.sync_window);
        get(m, "disc_width", cfg.model.disc_width);
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        check_keys(l,
                   {"gamma", "mu", "lambda_h_rec", "lambda_h_trip", "lambda_h_tem", "lambda_h_style", "lambda_d_rec",
                    "lambda_d_trip", "lambda_d_sync", "lambda_d_tem", "lambda_d_style", "ssim_c1", "ssim_c2"},
                   "loss");
        get(l, "gamma", cfg.loss.gamma);
        get(l, "mu", cfg.loss.mu);
        get(l, "lambda_h_rec", cfg.loss.lambda_h_rec);
        get(l, "lambda_h_trip", cfg.loss.lambda_h_trip);
        get(l, "lambda_h_tem", cfg.loss.lambda_h_tem);
        get(l, "lambda_h_style", cfg.loss.lambda_h_style);
        get(l, "lambda_d_rec", cfg.loss.lambda_d_rec);
        get(l, "lambda_d_trip", cfg.loss.lambda_d_trip);
        get(l, "lambda_d_sync", cfg.loss.lambda_d_sync);
        get(l, "lambda_d_tem", cfg.loss.lambda_d_tem);
        get(l, "lambda_d_style", cfg.loss.lambda_d_style);
        get(l, "ssim_c1", cfg.loss.ssim_c1);
        get(l, "ssim_c2", cfg.loss.ssim_c2);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        check_keys(t,
                   {"lr_initial", "lr_final", "lr_decay_epochs", "epochs", "batch", "pose_train_len", "clip_len",
                    "adam_beta1", "adam_beta2", "adam_eps", "decoder", "no_set", "no_style_disc", "no_trip", "no_tem",
                    "no_sync", "pose_input"},
                   "train");
        get(t, "lr_initial", cfg.train.lr_initial);
        get(t, "lr_final", cfg.train.lr_final);
        get(t, "lr_decay_epochs", cfg.train.lr_decay_epochs);
        get(t, "epochs", cfg.train.epochs);
        get(t, "batch", cfg.train.batch);
        get(t, "pose_train_len", cfg.train.pose_train_len);
        get(t, "clip_len", cfg.train.clip_len);
        get(t, "adam_beta1", cfg.train.adam_beta1);
        get(t, "adam_beta2", cfg.train.adam_beta2);
        get(t, "adam_eps", cfg.train.adam_eps);
        get(t, "decoder", cfg.train.decoder);
        get(t, "no_set", cfg.train.no_set);
        get(t, "no_style_disc", cfg.train.no_style_disc);
        get(t, "no_trip", cfg.train.no_trip);
        get(t, "no_tem", cfg.train.no_tem);
        get(t, "no_sync", cfg.train.no_sync);
        get(t, "pose_input", cfg.train.pose_input);
    }
    if (j.contains("corpus")) {
        const auto& c = j["corpus"];
        check_keys(c,
                   {"classes", "utt_per_class", "utt_len", "separation", "coupling", "expr_clip_min", "expr_clip_max",
                    "pose_clip_min", "pose_clip_max", "holdout_fraction"},
                   "corpus");
        get(c, "classes", cfg.corpus.classes);
        get(c, "utt_per_class", cfg.corpus.utt_per_class);
        get(c, "utt_len", cfg.corpus.utt_len);
        get(c, "separation", cfg.corpus.separation);
        get(c, "coupling", cfg.corpus.coupling);
        get(c, "expr_clip_min", cfg.corpus.expr_clip_min);
        get(c, "expr_clip_max", cfg.corpus.expr_clip_max);
        get(c, "pose_clip_min", cfg.corpus.pose_clip_min);
        get(c, "pose_clip_max", cfg.corpus.pose_clip_max);
        get(c, "holdout_fraction", cfg.corpus.holdout_fraction);
    }
    if (cfg.train.decoder != "xl" && cfg.train.decoder != "sdt-tf" && cfg.train.decoder != "sdt-rr")
        throw std::invalid_argument("train.decoder must be one of xl | sdt-tf | sdt-rr");
    if (cfg.train.pose_input != "acoustic" && cfg.train.pose_input != "phoneme")
        throw std::invalid_argument("train.pose_input must be acoustic | phoneme");
    if (cfg.model.lower_dim + cfg.model.upper_dim != cfg.model.expr_dim)
        throw std::invalid_argument("lower_dim + upper_dim must equal expr_dim");
    return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
    std::ifstream f(file);
    if (!f) throw std::runtime_error("cannot open config: " + file.string());
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void RunConfig::save(const std::filesystem::path& file) const {
    std::ofstream f(file, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write config: " + file.string());
    f << to_json() << "\n";
}

}  // namespace sm
