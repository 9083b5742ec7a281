#include "transfuse/model.hpp"

#include <cstring>
#include <fstream>

#include "transfuse/rng.hpp"

namespace transfuse {

void PatchConfig::validate() const {
    if (image_size <= 0 || global_patch <= 0 || local_patch <= 0)
        throw ConfigError("patch: sizes must be positive");
    if (image_size % global_patch != 0)
        throw ConfigError("patch: image_size must be divisible by global_patch");
    if (global_patch % local_patch != 0)
        throw ConfigError("patch: global_patch must be divisible by local_patch");
}

void ModelConfig::validate() const {
    patch.validate();
    if (cnn_channels < 1) throw ConfigError("model: cnn_channels must be >= 1");
    if (depth < 1) throw ConfigError("model: depth must be >= 1");
    if (heads < 1) throw ConfigError("model: heads must be >= 1");
    if (mlp_ratio <= 0.0) throw ConfigError("model: mlp_ratio must be > 0");
    if (token_dim_global % heads != 0 || token_dim_local % heads != 0)
        throw ConfigError("model: token dims must be divisible by heads");
    if (trans_channels < 1) throw ConfigError("model: trans_channels must be >= 1");
}

FeatureMap FeatureMap::from_tensor(const Tensor& t) {
    if (t.ndim() != 3) throw ShapeError("FeatureMap: expected [C,H,W]");
    FeatureMap f;
    f.channels = t.dim(0);
    f.height = t.dim(1);
    f.width = t.dim(2);
    f.values = t.data;
    return f;
}

Tensor FeatureMap::to_tensor() const {
    Tensor t;
    t.shape = {channels, height, width};
    t.data = values;
    return t;
}

Param& ParamStore::add(const std::string& name, Tensor init) {
    auto [it, inserted] = params_.emplace(name, Param{std::move(init), Tensor{}});
    if (!inserted) throw ConfigError("duplicate parameter: " + name);
    it->second.grad = Tensor(it->second.value.shape);
    return it->second;
}

Param& ParamStore::at(const std::string& name) {
    const auto it = params_.find(name);
    if (it == params_.end()) throw NotFoundError("no such parameter: " + name);
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    const auto it = params_.find(name);
    if (it == params_.end()) throw NotFoundError("no such parameter: " + name);
    return it->second;
}

std::size_t ParamStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.value.numel());
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, p] : params_) std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
}

double ParamStore::grad_squared_norm() const {
    double s = 0.0;
    for (const auto& [name, p] : params_) s += p.grad.squared_norm();
    return s;
}

Tensor patchify_global(const Image& img, const PatchConfig& cfg) {
    cfg.validate();
    if (img.height != cfg.image_size || img.width != cfg.image_size)
        throw ConfigError("patchify: image does not match configured size");
    const int p = cfg.global_patch;
    const int grid = cfg.grid();
    Tensor out({cfg.n_global(), p * p});
    for (int j = 0; j < cfg.n_global(); ++j) {
        const int gy = j / grid, gx = j % grid;
        double* tok = out.data.data() + static_cast<std::size_t>(j) * p * p;
        for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x) tok[y * p + x] = img.at(gy * p + y, gx * p + x);
    }
    return out;
}

Tensor patchify_local(const Image& img, const PatchConfig& cfg) {
    cfg.validate();
    if (img.height != cfg.image_size || img.width != cfg.image_size)
        throw ConfigError("patchify: image does not match configured size");
    const int pg = cfg.global_patch;
    const int pl = cfg.local_patch;
    const int grid = cfg.grid();
    const int sub_grid = pg / pl;
    Tensor out({cfg.n_local(), pl * pl});
    int tok_idx = 0;
    for (int j = 0; j < cfg.n_global(); ++j) {
        const int gy = j / grid, gx = j % grid;
        for (int sy = 0; sy < sub_grid; ++sy) {
            for (int sx = 0; sx < sub_grid; ++sx) {
                double* tok = out.data.data() + static_cast<std::size_t>(tok_idx) * pl * pl;
                const int base_y = gy * pg + sy * pl;
                const int base_x = gx * pg + sx * pl;
                for (int y = 0; y < pl; ++y)
                    for (int x = 0; x < pl; ++x) tok[y * pl + x] = img.at(base_y + y, base_x + x);
                ++tok_idx;
            }
        }
    }
    return out;
}

Image unpatchify_global(const Tensor& tokens, const PatchConfig& cfg) {
    const int p = cfg.global_patch;
    const int grid = cfg.grid();
    if (tokens.ndim() != 2 || tokens.rows() != cfg.n_global() || tokens.cols() != p * p)
        throw ShapeError("unpatchify: token shape mismatch");
    Image img(cfg.image_size, cfg.image_size);
    for (int j = 0; j < cfg.n_global(); ++j) {
        const int gy = j / grid, gx = j % grid;
        const double* tok = tokens.data.data() + static_cast<std::size_t>(j) * p * p;
        for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x) img.at(gy * p + y, gx * p + x) = tok[y * p + x];
    }
    return img;
}

Tape::Var linear_project(Tape& t, Tape::Var seq, Tape::Var w, Tape::Var b, Tape::Var pos) {
    return t.add_row_cycled(t.add_row_bias(t.matmul(seq, w), b), pos);
}

Tape::Var transformer_block(Tape& t, Tape::Var seq, const BlockVars& p, int heads,
                            int group_size) {
    Tape::Var h = t.layer_norm(seq, p.ln1_g, p.ln1_b);
    const Tape::Var q = t.add_row_bias(t.matmul(h, p.wq), p.bq);
    const Tape::Var k = t.add_row_bias(t.matmul(h, p.wk), p.bk);
    const Tape::Var v = t.add_row_bias(t.matmul(h, p.wv), p.bv);
    Tape::Var att = t.self_attention(q, k, v, heads, group_size);
    att = t.add_row_bias(t.matmul(att, p.wo), p.bo);
    const Tape::Var x1 = t.add(seq, att);

    Tape::Var m = t.layer_norm(x1, p.ln2_g, p.ln2_b);
    m = t.gelu(t.add_row_bias(t.matmul(m, p.w1), p.b1));
    m = t.add_row_bias(t.matmul(m, p.w2), p.b2);
    return t.add(x1, m);
}

Tape::Var inject_local(Tape& t, Tape::Var global_seq, Tape::Var local_seq, Tape::Var w,
                       Tape::Var b, int subs_per_patch) {
    const Tensor& lv = t.val(local_seq);
    const Tensor& gv = t.val(global_seq);
    if (lv.ndim() != 2 || lv.rows() % subs_per_patch != 0 ||
        lv.rows() / subs_per_patch != gv.rows())
        throw ShapeError("inject_local: local tokens not grouped by global token");
    const Tape::Var flat =
        t.reshape(local_seq, {gv.rows(), subs_per_patch * lv.cols()});
    const Tape::Var proj = t.add_row_bias(t.matmul(flat, w), b);
    return t.add(global_seq, proj);
}

// --- parameter construction ---

namespace {

Tensor init_trunc_normal(std::vector<int> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.truncated_normal(stddev);
    return t;
}

Tensor init_he_conv(std::vector<int> shape, Rng& rng) {
    const int fan_in = shape[1] * shape[2] * shape[3];
    return init_trunc_normal(std::move(shape), std::sqrt(2.0 / fan_in), rng);
}

}  // namespace

Model::Model(ModelConfig cfg, std::uint64_t seed, bool zero_residual_init) : cfg_(std::move(cfg)) {
    cfg_.validate();
    create_params(seed, zero_residual_init, false);
}

Model::Model(ModelConfig cfg, LoadTag) : cfg_(std::move(cfg)) {
    cfg_.validate();
    create_params(0, true, true);
}

void Model::create_params(std::uint64_t seed, bool zero_residual_init, bool zero_everything) {
    Rng rng(Rng::stream_seed(seed, "model-init"));
    const int cc = cfg_.cnn_channels;
    const int ct = cfg_.trans_channels;
    const int dg = cfg_.token_dim_global;
    const int dl = cfg_.token_dim_local;
    const PatchConfig& pc = cfg_.patch;

    auto conv = [&](const std::string& name, int co, int ci, int k) {
        Tensor w = zero_everything ? Tensor({co, ci, k, k})
                                   : init_he_conv({co, ci, k, k}, rng);
        store_.add(name + ".w", std::move(w));
        store_.add(name + ".b", Tensor({co}));
    };
    auto linear = [&](const std::string& name, int in, int out, bool zero_w) {
        Tensor w = (zero_everything || zero_w) ? Tensor({in, out})
                                               : init_trunc_normal({in, out}, 0.02, rng);
        store_.add(name + ".w", std::move(w));
        store_.add(name + ".b", Tensor({out}));
    };
    auto layer_norm_params = [&](const std::string& name, int d) {
        store_.add(name + ".g", zero_everything ? Tensor({d}) : Tensor::full({d}, 1.0));
        store_.add(name + ".b", Tensor({d}));
    };
    auto block = [&](const std::string& prefix, int d) {
        const int hidden = static_cast<int>(d * cfg_.mlp_ratio);
        layer_norm_params(prefix + ".ln1", d);
        linear(prefix + ".attn.wq", d, d, false);
        linear(prefix + ".attn.wk", d, d, false);
        linear(prefix + ".attn.wv", d, d, false);
        linear(prefix + ".attn.wo", d, d, zero_residual_init);
        layer_norm_params(prefix + ".ln2", d);
        linear(prefix + ".mlp.w1", d, hidden, false);
        linear(prefix + ".mlp.w2", hidden, d, zero_residual_init);
    };

    // CNN-Module: three ConvBlocks, 1 -> cc then cc -> cc.
    conv("cnn.b0.c0", cc, 1, 3);
    conv("cnn.b0.c1", cc, cc, 3);
    conv("cnn.b1.c0", cc, cc, 3);
    conv("cnn.b1.c1", cc, cc, 3);
    conv("cnn.b2.c0", cc, cc, 3);
    conv("cnn.b2.c1", cc, cc, 3);

    // EnhanceBlock: concat of the two branches -> two ConvBlocks.
    const int enh_in = cfg_.with_transformer ? cc + ct : cc;
    conv("enh.b0.c0", cc, enh_in, 3);
    conv("enh.b0.c1", cc, cc, 3);
    conv("enh.b1.c0", cc, cc, 3);
    conv("enh.b1.c1", cc, cc, 3);

    // Decoder: two ConvBlocks then a 1x1 projection to one channel.
    conv("dec.b0.c0", cc, cc, 3);
    conv("dec.b0.c1", cc, cc, 3);
    conv("dec.b1.c0", cc, cc, 3);
    conv("dec.b1.c1", cc, cc, 3);
    conv("dec.out", 1, cc, 1);

    if (!cfg_.with_transformer) return;

    const int s = pc.subs_per_patch();
    linear("tr.lproj", pc.local_patch * pc.local_patch, dl, false);
    store_.add("tr.lpos", zero_everything ? Tensor({s, dl}) : init_trunc_normal({s, dl}, 0.02, rng));
    linear("tr.gproj", pc.global_patch * pc.global_patch, dg, false);
    store_.add("tr.gpos", zero_everything ? Tensor({pc.n_global(), dg})
                                          : init_trunc_normal({pc.n_global(), dg}, 0.02, rng));
    for (int l = 0; l < cfg_.depth; ++l) {
        const std::string lp = "tr.l" + std::to_string(l);
        block(lp + ".fg", dl);
        linear(lp + ".inj", s * dl, dg, false);
        block(lp + ".gl", dg);
    }
    linear("tr.fold", dg, pc.global_patch * pc.global_patch * ct, false);
}

// --- forward passes ---

Tape::Var ModelPass::param(const std::string& name) {
    const auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const Tape::Var v = tape_.leaf(model_.store_.at(name).value, true);
    bound_.emplace(name, v);
    return v;
}

void ModelPass::accumulate_param_grads(double grad_scale) {
    for (const auto& [name, var] : bound_) {
        Tensor& dst = model_.store_.at(name).grad;
        const Tensor& src = tape_.grad(var);
        for (int i = 0; i < dst.numel(); ++i) dst[i] += grad_scale * src[i];
    }
}

Tape::Var ModelPass::input_image(const Image& img) {
    return tape_.leaf(image_to_tensor(img), false);
}

Tape::Var ModelPass::conv_block(Tape::Var x, const std::string& prefix) {
    x = tape_.conv2d(x, param(prefix + ".c0.w"), param(prefix + ".c0.b"), 1);
    x = tape_.conv2d(x, param(prefix + ".c1.w"), param(prefix + ".c1.b"), 1);
    return tape_.relu(x);
}

BlockVars ModelPass::bind_block(const std::string& prefix) {
    BlockVars b;
    b.ln1_g = param(prefix + ".ln1.g");
    b.ln1_b = param(prefix + ".ln1.b");
    b.wq = param(prefix + ".attn.wq.w");
    b.bq = param(prefix + ".attn.wq.b");
    b.wk = param(prefix + ".attn.wk.w");
    b.bk = param(prefix + ".attn.wk.b");
    b.wv = param(prefix + ".attn.wv.w");
    b.bv = param(prefix + ".attn.wv.b");
    b.wo = param(prefix + ".attn.wo.w");
    b.bo = param(prefix + ".attn.wo.b");
    b.ln2_g = param(prefix + ".ln2.g");
    b.ln2_b = param(prefix + ".ln2.b");
    b.w1 = param(prefix + ".mlp.w1.w");
    b.b1 = param(prefix + ".mlp.w1.b");
    b.w2 = param(prefix + ".mlp.w2.w");
    b.b2 = param(prefix + ".mlp.w2.b");
    return b;
}

Tape::Var ModelPass::cnn_module(Tape::Var img) {
    Tape::Var x = conv_block(img, "cnn.b0");
    x = conv_block(x, "cnn.b1");
    return conv_block(x, "cnn.b2");
}

Tape::Var ModelPass::transformer_module(const Image& img) {
    const ModelConfig& cfg = model_.cfg_;
    const PatchConfig& pc = cfg.patch;
    const int s = pc.subs_per_patch();

    const Tape::Var xg = tape_.leaf(patchify_global(img, pc));
    const Tape::Var xl = tape_.leaf(patchify_local(img, pc));
    Tape::Var phi = linear_project(tape_, xl, param("tr.lproj.w"), param("tr.lproj.b"),
                                   param("tr.lpos"));
    Tape::Var psi = linear_project(tape_, xg, param("tr.gproj.w"), param("tr.gproj.b"),
                                   param("tr.gpos"));
    for (int l = 0; l < cfg.depth; ++l) {
        const std::string lp = "tr.l" + std::to_string(l);
        phi = transformer_block(tape_, phi, bind_block(lp + ".fg"), cfg.heads, s);
        if (cfg.inject_every_layer || l == 0)
            psi = inject_local(tape_, psi, phi, param(lp + ".inj.w"), param(lp + ".inj.b"), s);
        psi = transformer_block(tape_, psi, bind_block(lp + ".gl"), cfg.heads, pc.n_global());
    }
    const Tape::Var tokens =
        tape_.add_row_bias(tape_.matmul(psi, param("tr.fold.w")), param("tr.fold.b"));
    return tape_.fold_tokens(tokens, cfg.trans_channels, pc.global_patch, pc.grid(), pc.grid());
}

Tape::Var ModelPass::enhance(Tape::Var cnn_feat, std::optional<Tape::Var> trans_feat) {
    Tape::Var x = trans_feat ? tape_.concat_channels(cnn_feat, *trans_feat) : cnn_feat;
    x = conv_block(x, "enh.b0");
    return conv_block(x, "enh.b1");
}

Tape::Var ModelPass::encode(const Image& img) {
    const Tape::Var x = input_image(img);
    const Tape::Var cnn_feat = cnn_module(x);
    if (!model_.cfg_.with_transformer) return enhance(cnn_feat, std::nullopt);
    const Tape::Var trans_feat = transformer_module(img);
    return enhance(cnn_feat, trans_feat);
}

Tape::Var ModelPass::decode(Tape::Var feat) {
    Tape::Var x = conv_block(feat, "dec.b0");
    x = conv_block(x, "dec.b1");
    return tape_.conv2d(x, param("dec.out.w"), param("dec.out.b"), 0);
}

// --- inference helpers ---

FeatureMap Model::encode_image(const Image& img) {
    Tape tape;
    ModelPass pass(*this, tape);
    const Tape::Var feat = pass.encode(img);
    const Tensor& v = tape.val(feat);
    if (!v.all_finite()) throw NumericalError("encoder produced non-finite activations");
    return FeatureMap::from_tensor(v);
}

Image Model::decode_feature(const FeatureMap& feat) {
    Tape tape;
    ModelPass pass(*this, tape);
    const Tape::Var in = tape.leaf(feat.to_tensor());
    const Tape::Var out = pass.decode(in);
    if (!tape.val(out).all_finite()) throw NumericalError("decoder produced non-finite output");
    return tensor_to_image_clamped(tape.val(out));
}

Image Model::reconstruct_image(const Image& img) {
    Tape tape;
    ModelPass pass(*this, tape);
    const Tape::Var out = pass.decode(pass.encode(img));
    if (!tape.val(out).all_finite()) throw NumericalError("network produced non-finite output");
    return tensor_to_image_clamped(tape.val(out));
}

}  // namespace transfuse
