#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "transfuse/image.hpp"
#include "transfuse/tape.hpp"

namespace transfuse {

struct PatchConfig {
    int image_size = 256;
    int global_patch = 16;  // P_G
    int local_patch = 4;    // P_L

    int grid() const { return image_size / global_patch; }
    int n_global() const { return grid() * grid(); }
    int subs_per_patch() const {
        const int s = global_patch / local_patch;
        return s * s;
    }
    int n_local() const { return n_global() * subs_per_patch(); }
    void validate() const;
};

struct ModelConfig {
    int cnn_channels = 16;
    int token_dim_global = 64;
    int token_dim_local = 16;
    int trans_channels = 8;  // channels of the folded transformer feature map
    int depth = 4;           // transformer layers L
    int heads = 4;
    double mlp_ratio = 4.0;
    bool with_transformer = true;
    bool inject_every_layer = true;  // false: local-to-global injection only at layer 0
    PatchConfig patch;

    void validate() const;
};

// C-channel spatial activation grid.
struct FeatureMap {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;  // [C][H][W] row-major

    static FeatureMap from_tensor(const Tensor& t);
    Tensor to_tensor() const;
    double at(int c, int y, int x) const {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double& at(int c, int y, int x) {
        return values[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    bool same_shape(const FeatureMap& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

struct Param {
    Tensor value;
    Tensor grad;  // persistent accumulator, consumed by the optimizer
};

class ParamStore {
public:
    Param& add(const std::string& name, Tensor init);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }

    std::map<std::string, Param>& entries() { return params_; }
    const std::map<std::string, Param>& entries() const { return params_; }

    std::size_t parameter_count() const;
    void zero_grads();
    double grad_squared_norm() const;

private:
    std::map<std::string, Param> params_;  // name-ordered, deterministic iteration
};

// Token extraction. Global tokens are flattened P_G x P_G patches in
// row-major patch order; local tokens are P_L x P_L sub-patches grouped by
// parent patch.
Tensor patchify_global(const Image& img, const PatchConfig& cfg);
Tensor patchify_local(const Image& img, const PatchConfig& cfg);
Image unpatchify_global(const Tensor& tokens, const PatchConfig& cfg);

// Per-layer transformer block parameters, already bound to a tape.
struct BlockVars {
    Tape::Var ln1_g, ln1_b;
    Tape::Var wq, bq, wk, bk, wv, bv, wo, bo;
    Tape::Var ln2_g, ln2_b;
    Tape::Var w1, b1, w2, b2;
};

// Affine projection per token plus a learned positional table whose rows
// repeat every table-height tokens.
Tape::Var linear_project(Tape& t, Tape::Var seq, Tape::Var w, Tape::Var b, Tape::Var pos);

// Pre-norm residual attention + pre-norm residual MLP.
Tape::Var transformer_block(Tape& t, Tape::Var seq, const BlockVars& p, int heads,
                            int group_size);

// Flattens each global token's sub-patch embeddings, maps them to the global
// width and adds them residually.
Tape::Var inject_local(Tape& t, Tape::Var global_seq, Tape::Var local_seq, Tape::Var w,
                       Tape::Var b, int subs_per_patch);

class Model {
public:
    Model(ModelConfig cfg, std::uint64_t seed, bool zero_residual_init = true);

    static Model load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    static constexpr std::uint32_t kCheckpointVersion = 1;

    const ModelConfig& config() const { return cfg_; }
    ParamStore& params() { return store_; }
    const ParamStore& params() const { return store_; }

    // Inference conveniences; each runs on a private tape.
    FeatureMap encode_image(const Image& img);
    Image decode_feature(const FeatureMap& feat);  // clamped to [0,1]
    Image reconstruct_image(const Image& img);     // clamped to [0,1]

private:
    struct LoadTag {};
    Model(ModelConfig cfg, LoadTag);
    void create_params(std::uint64_t seed, bool zero_residual_init, bool zero_everything);

    ModelConfig cfg_;
    ParamStore store_;

    friend class ModelPass;
};

// One forward (and optional backward) episode of a Model on a Tape. Binds
// each parameter into the tape once; accumulate_param_grads() pushes the
// tape's gradients back into the store.
class ModelPass {
public:
    ModelPass(Model& model, Tape& tape) : model_(model), tape_(tape) {}

    Tape::Var input_image(const Image& img);  // [1,H,W] leaf
    Tape::Var cnn_module(Tape::Var img);
    Tape::Var transformer_module(const Image& img);
    Tape::Var enhance(Tape::Var cnn_feat, std::optional<Tape::Var> trans_feat);
    Tape::Var encode(const Image& img);
    Tape::Var decode(Tape::Var feat);  // raw, unclamped

    void accumulate_param_grads(double grad_scale);

    Tape::Var param(const std::string& name);

private:
    Tape::Var conv_block(Tape::Var x, const std::string& prefix);
    BlockVars bind_block(const std::string& prefix);

    Model& model_;
    Tape& tape_;
    std::map<std::string, Tape::Var> bound_;
};

}  // namespace transfuse
