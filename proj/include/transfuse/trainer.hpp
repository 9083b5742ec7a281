#pragma once

#include <filesystem>
#include <vector>

#include "transfuse/dataset.hpp"
#include "transfuse/destruct.hpp"
#include "transfuse/loss.hpp"
#include "transfuse/model.hpp"

namespace transfuse {

struct TrainConfig {
    int epochs = 70;
    int batch_size = 64;
    double learning_rate = 1e-4;
    double weight_decay = 5e-4;
    std::uint64_t seed = 0;
    int image_size = 256;
    int checkpoint_every = 10;    // epochs; 0 disables periodic checkpoints
    double clip_grad_norm = 1.0;  // global norm; 0 disables clipping
    int max_steps = 0;            // 0 = run all epochs

    TransformSpec transform;
    LossConfig loss;
    ModelConfig model;

    void validate() const;
};

struct TrainStep {
    int step = 0;   // 1-based optimizer step
    int epoch = 0;  // 0-based
    double loss = 0.0;
    double mse = 0.0;
    double ssim = 0.0;
    double tv = 0.0;
    double lr = 0.0;
};

struct TrainLog {
    std::vector<TrainStep> steps;
    // Wall-clock bookkeeping lives apart from the step records so the
    // per-step log stays bitwise reproducible across identical runs.
    std::string started_at;
    std::string finished_at;
    double wall_seconds = 0.0;
};

// Cosine annealing from `base` at step 0 to zero at `total_steps`.
double lr_at(int step, int total_steps, double base);

void write_train_log(const TrainLog& log, const std::filesystem::path& path);

struct TrainResult {
    std::filesystem::path checkpoint_path;
    TrainLog log;
};

// Stage-one self-supervised loop: destroy -> encode -> decode -> loss ->
// AdamW step, fully determined by cfg.seed. Writes checkpoint.ckpt and
// train_log.jsonl under out_dir.
TrainResult train(const DatasetManifest& manifest, const TrainConfig& cfg,
                  const std::filesystem::path& out_dir);

}  // namespace transfuse
