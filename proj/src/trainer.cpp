#include "transfuse/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "transfuse/image_io.hpp"

namespace transfuse {
namespace {

// Decoupled-weight-decay Adam over a ParamStore.
class AdamW {
public:
    AdamW(ParamStore& store, double weight_decay)
        : store_(store), weight_decay_(weight_decay) {
        for (auto& [name, p] : store.entries()) {
            m_.emplace_back(Tensor(p.value.shape));
            v_.emplace_back(Tensor(p.value.shape));
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        std::size_t idx = 0;
        for (auto& [name, p] : store_.entries()) {
            Tensor& m = m_[idx];
            Tensor& v = v_[idx];
            ++idx;
            for (int i = 0; i < p.value.numel(); ++i) {
                const double g = p.grad[i];
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p.value[i] -= lr * (mhat / (std::sqrt(vhat) + eps_) +
                                    weight_decay_ * p.value[i]);
            }
        }
    }

private:
    ParamStore& store_;
    double weight_decay_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    int t_ = 0;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
};

void clip_gradients(ParamStore& store, double max_norm) {
    if (max_norm <= 0.0) return;
    const double norm = std::sqrt(store.grad_squared_norm());
    if (norm <= max_norm) return;
    const double s = max_norm / norm;
    for (auto& [name, p] : store.entries())
        for (double& g : p.grad.data) g *= s;
}

std::vector<int> shuffled_indices(int n, Rng& rng) {
    std::vector<int> idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<std::size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng.uniform_int(i + 1)]);
    return idx;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (image_size < 8) throw ConfigError("train: image_size must be >= 8");
    if (max_steps < 0) throw ConfigError("train: max_steps must be >= 0");
    transform.validate();
    loss.validate();
    model.validate();
    if (model.patch.image_size != image_size)
        throw ConfigError("train: model patch grid does not match image_size");
}

double lr_at(int step, int total_steps, double base) {
    if (step < 0 || step > total_steps) throw ConfigError("lr_at: step out of range");
    if (total_steps == 0) return base;
    const double t = static_cast<double>(step) / total_steps;
    return base * (1.0 + std::cos(3.14159265358979323846 * t)) / 2.0;
}

void write_train_log(const TrainLog& log, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write train log: " + path.string());
    char line[512];
    for (const TrainStep& s : log.steps) {
        std::snprintf(line, sizeof(line),
                      "{\"step\":%d,\"epoch\":%d,\"loss\":%.17g,\"mse\":%.17g,"
                      "\"ssim\":%.17g,\"tv\":%.17g,\"lr\":%.17g}\n",
                      s.step, s.epoch, s.loss, s.mse, s.ssim, s.tv, s.lr);
        out << line;
    }
}

namespace {

std::string timestamp_now() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

}  // namespace

TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir) {
    cfg.validate();
    if (manifest.entries.empty()) throw EmptyDatasetError("train: empty manifest");
    std::filesystem::create_directories(out_dir);
    const auto wall_start = std::chrono::steady_clock::now();
    const std::string started_at = timestamp_now();

    // Preload and preprocess the whole manifest; stage-one runs at desk
    // scale, so everything fits in memory.
    std::vector<Image> images;
    images.reserve(manifest.entries.size());
    for (const ManifestEntry& e : manifest.entries)
        images.push_back(preprocess(load_image(e.path), cfg.image_size));

    Model model(cfg.model, Rng::stream_seed(cfg.seed, "params"));
    Rng shuffle_rng(Rng::stream_seed(cfg.seed, "shuffle"));
    Rng destroy_rng(Rng::stream_seed(cfg.seed, "destroy"));
    AdamW optimizer(model.params(), cfg.weight_decay);

    const int n = static_cast<int>(images.size());
    const int steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
    int total_steps = cfg.epochs * steps_per_epoch;
    if (cfg.max_steps > 0) total_steps = std::min(total_steps, cfg.max_steps);

    const std::filesystem::path ckpt_path = out_dir / "checkpoint.ckpt";
    TrainLog log;
    int global_step = 0;
    bool done = false;

    for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
        const std::vector<int> order = shuffled_indices(n, shuffle_rng);
        for (int start = 0; start < n && !done; start += cfg.batch_size) {
            const int end = std::min(start + cfg.batch_size, n);
            const int bsz = end - start;

            // Destruction draws happen sequentially before any network work
            // so the random stream is independent of evaluation order.
            std::vector<const Image*> refs(static_cast<std::size_t>(bsz));
            std::vector<Image> destroyed(static_cast<std::size_t>(bsz));
            for (int i = 0; i < bsz; ++i) {
                const Image& src = images[static_cast<std::size_t>(order[start + i])];
                refs[static_cast<std::size_t>(i)] = &src;
                destroyed[static_cast<std::size_t>(i)] = destroy(src, cfg.transform, destroy_rng).first;
            }

            model.params().zero_grads();
            double batch_loss = 0.0, batch_mse = 0.0, batch_ssim = 0.0, batch_tv = 0.0;
            for (int i = 0; i < bsz; ++i) {
                Tape tape;
                ModelPass pass(model, tape);
                const Tape::Var raw = pass.decode(pass.encode(destroyed[static_cast<std::size_t>(i)]));
                const Image& ref_img = *refs[static_cast<std::size_t>(i)];
                const Tape::Var out_hw = tape.reshape(raw, {cfg.image_size, cfg.image_size});
                Tensor ref_t;
                ref_t.shape = {cfg.image_size, cfg.image_size};
                ref_t.data = ref_img.pix;
                const Tape::Var ref = tape.leaf(std::move(ref_t));
                const LossVars lv = loss_total_var(tape, out_hw, ref, cfg.loss);
                tape.backward(lv.total);
                pass.accumulate_param_grads(1.0 / bsz);
                batch_loss += tape.val(lv.total)[0];
                batch_mse += tape.val(lv.mse)[0];
                batch_ssim += tape.val(lv.ssim)[0];
                batch_tv += tape.val(lv.tv)[0];
            }
            batch_loss /= bsz;
            batch_mse /= bsz;
            batch_ssim /= bsz;
            batch_tv /= bsz;

            if (!std::isfinite(batch_loss))
                throw NumericalError("train: loss diverged at step " +
                                     std::to_string(global_step + 1) +
                                     "; last checkpoint retained");

            clip_gradients(model.params(), cfg.clip_grad_norm);
            const double lr = lr_at(global_step, total_steps, cfg.learning_rate);
            optimizer.step(lr);
            ++global_step;

            log.steps.push_back(TrainStep{global_step, epoch, batch_loss, batch_mse,
                                          batch_ssim, batch_tv, lr});
            if (cfg.max_steps > 0 && global_step >= cfg.max_steps) done = true;
        }
        if (cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && !done) {
            model.save(out_dir / ("checkpoint_epoch_" + std::to_string(epoch + 1) + ".ckpt"));
        }
    }

    model.save(ckpt_path);
    log.started_at = started_at;
    log.finished_at = timestamp_now();
    log.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
    write_train_log(log, out_dir / "train_log.jsonl");
    {
        std::ofstream meta(out_dir / "train_meta.json");
        char line[256];
        std::snprintf(line, sizeof(line),
                      "{\"started_at\":\"%s\",\"finished_at\":\"%s\",\"wall_seconds\":%.3f,"
                      "\"steps\":%zu}\n",
                      log.started_at.c_str(), log.finished_at.c_str(), log.wall_seconds,
                      log.steps.size());
        meta << line;
    }
    return TrainResult{ckpt_path, std::move(log)};
}

}  // namespace transfuse
