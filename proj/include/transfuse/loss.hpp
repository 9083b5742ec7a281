#pragma once

#include "transfuse/image.hpp"
#include "transfuse/tape.hpp"

namespace transfuse {

struct LossConfig {
    double lambda1 = 20.0;  // SSIM weight
    double lambda2 = 20.0;  // TV weight
    double ssim_window_sigma = 1.5;
    int ssim_window_radius = 5;
    double ssim_c1 = 0.02;
    double ssim_c2 = 0.06;
    bool tv_normalize = false;  // divide the TV sum by pixel count

    void validate() const;
};

// Mean SSIM over the valid window positions of a Gaussian-weighted local
// map. Requires both dimensions >= 2*radius + 1.
double ssim(const Tensor& x, const Tensor& y, const LossConfig& cfg);
double ssim(const Image& x, const Image& y, const LossConfig& cfg);

// Reference (non-differentiable) loss implementations; `out` and `ref` are
// [H,W] tensors so perturbed values outside [0,1] are representable.
double loss_mse(const Tensor& out, const Tensor& ref);
double loss_ssim(const Tensor& out, const Tensor& ref, const LossConfig& cfg);
double loss_tv(const Tensor& out, const Tensor& ref, const LossConfig& cfg);
double loss_total(const Tensor& out, const Tensor& ref, const LossConfig& cfg);

double loss_mse(const Image& out, const Image& ref);
double loss_ssim(const Image& out, const Image& ref, const LossConfig& cfg);
double loss_tv(const Image& out, const Image& ref, const LossConfig& cfg);
double loss_total(const Image& out, const Image& ref, const LossConfig& cfg);

// Differentiable composite loss; out/ref are [H,W] vars on the tape.
struct LossVars {
    Tape::Var total;
    Tape::Var mse;
    Tape::Var ssim;
    Tape::Var tv;
};
LossVars loss_total_var(Tape& t, Tape::Var out, Tape::Var ref, const LossConfig& cfg);

}  // namespace transfuse
