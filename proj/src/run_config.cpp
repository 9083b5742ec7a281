#include "transfuse/run_config.hpp"

#include <json.hpp>

#include <fstream>
#include <set>
#include <string>

namespace transfuse {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& section) {
    for (const auto& [key, value] : obj.items()) {
        if (known.count(key) == 0)
            throw ConfigError("config: unknown key '" + key + "' in section '" + section + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

void parse_train(const json& j, TrainConfig& cfg) {
    reject_unknown(j,
                   {"epochs", "batch_size", "learning_rate", "weight_decay", "seed",
                    "image_size", "checkpoint_every", "clip_grad_norm", "max_steps"},
                   "train");
    read(j, "epochs", cfg.epochs);
    read(j, "batch_size", cfg.batch_size);
    read(j, "learning_rate", cfg.learning_rate);
    read(j, "weight_decay", cfg.weight_decay);
    read(j, "seed", cfg.seed);
    read(j, "image_size", cfg.image_size);
    read(j, "checkpoint_every", cfg.checkpoint_every);
    read(j, "clip_grad_norm", cfg.clip_grad_norm);
    read(j, "max_steps", cfg.max_steps);
}

void parse_model(const json& j, ModelConfig& cfg) {
    reject_unknown(j,
                   {"cnn_channels", "token_dim_global", "token_dim_local", "trans_channels",
                    "depth", "heads", "mlp_ratio", "with_transformer", "inject_every_layer",
                    "global_patch", "local_patch"},
                   "model");
    read(j, "cnn_channels", cfg.cnn_channels);
    read(j, "token_dim_global", cfg.token_dim_global);
    read(j, "token_dim_local", cfg.token_dim_local);
    read(j, "trans_channels", cfg.trans_channels);
    read(j, "depth", cfg.depth);
    read(j, "heads", cfg.heads);
    read(j, "mlp_ratio", cfg.mlp_ratio);
    read(j, "with_transformer", cfg.with_transformer);
    read(j, "inject_every_layer", cfg.inject_every_layer);
    read(j, "global_patch", cfg.patch.global_patch);
    read(j, "local_patch", cfg.patch.local_patch);
}

void parse_transform(const json& j, TransformSpec& spec) {
    reject_unknown(j,
                   {"prob_nonlinear", "prob_brightness", "prob_noise", "gamma_choices",
                    "blur_sigma", "n_subregions", "subregion_size", "lut_resolution"},
                   "transform");
    read(j, "prob_nonlinear", spec.prob_nonlinear);
    read(j, "prob_brightness", spec.prob_brightness);
    read(j, "prob_noise", spec.prob_noise);
    read(j, "gamma_choices", spec.gamma_choices);
    read(j, "blur_sigma", spec.blur_sigma);
    read(j, "n_subregions", spec.n_subregions);
    read(j, "subregion_size", spec.subregion_size);
    read(j, "lut_resolution", spec.lut_resolution);
}

void parse_loss(const json& j, LossConfig& cfg) {
    reject_unknown(j,
                   {"lambda1", "lambda2", "ssim_window_sigma", "ssim_window_radius", "ssim_c1",
                    "ssim_c2", "tv_normalize"},
                   "loss");
    read(j, "lambda1", cfg.lambda1);
    read(j, "lambda2", cfg.lambda2);
    read(j, "ssim_window_sigma", cfg.ssim_window_sigma);
    read(j, "ssim_window_radius", cfg.ssim_window_radius);
    read(j, "ssim_c1", cfg.ssim_c1);
    read(j, "ssim_c2", cfg.ssim_c2);
    read(j, "tv_normalize", cfg.tv_normalize);
}

void parse_fusion(const json& j, FusionRule& rule) {
    reject_unknown(j, {"rule", "l1_block_radius"}, "fusion");
    if (j.contains("rule")) rule.kind = fusion_rule_from_name(j.at("rule").get<std::string>());
    read(j, "l1_block_radius", rule.l1_block_radius);
}

}  // namespace

RunConfig default_run_config() { return RunConfig{}; }

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("no such config file: " + path.string());

    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("config: parse error in " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    reject_unknown(j, {"train", "model", "transform", "loss", "fusion"}, "<root>");

    RunConfig cfg;
    try {
        if (j.contains("train")) parse_train(j.at("train"), cfg.train);
        if (j.contains("model")) parse_model(j.at("model"), cfg.train.model);
        if (j.contains("transform")) parse_transform(j.at("transform"), cfg.train.transform);
        if (j.contains("loss")) parse_loss(j.at("loss"), cfg.train.loss);
        if (j.contains("fusion")) parse_fusion(j.at("fusion"), cfg.fusion);
    } catch (const json::exception& e) {
        throw ConfigError("config: bad value in " + path.string() + ": " + e.what());
    }
    cfg.train.model.patch.image_size = cfg.train.image_size;
    return cfg;
}

}  // namespace transfuse
