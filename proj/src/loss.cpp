#include "transfuse/loss.hpp"

#include <cmath>
#include <memory>

namespace transfuse {
namespace {

std::vector<double> ssim_kernel(const LossConfig& cfg) {
    // Gaussian taps truncated at the configured radius (not at 3*sigma).
    const int r = cfg.ssim_window_radius;
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int i = -r; i <= r; ++i) {
        const double v =
            std::exp(-(static_cast<double>(i) * i) / (2.0 * cfg.ssim_window_sigma * cfg.ssim_window_sigma));
        k[static_cast<std::size_t>(i + r)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

// Valid separable filter (same contract as the tape op, duplicated here so
// the reference path stays independent of the autodiff code).
Tensor filter_valid(const Tensor& x, const std::vector<double>& k) {
    const int taps = static_cast<int>(k.size());
    const int r = (taps - 1) / 2;
    const int h = x.rows(), w = x.cols();
    if (h < taps || w < taps) throw ConfigError("ssim: image smaller than window");
    Tensor tmp({h, w - 2 * r});
    for (int y = 0; y < h; ++y) {
        for (int ox = 0; ox < w - 2 * r; ++ox) {
            double acc = 0.0;
            for (int t = 0; t < taps; ++t) acc += k[static_cast<std::size_t>(t)] * x.at2(y, ox + t);
            tmp.at2(y, ox) = acc;
        }
    }
    Tensor out({h - 2 * r, w - 2 * r});
    for (int oy = 0; oy < h - 2 * r; ++oy) {
        for (int ox = 0; ox < w - 2 * r; ++ox) {
            double acc = 0.0;
            for (int t = 0; t < taps; ++t) acc += k[static_cast<std::size_t>(t)] * tmp.at2(oy + t, ox);
            out.at2(oy, ox) = acc;
        }
    }
    return out;
}

Tensor to_hw(const Image& img) {
    Tensor t;
    t.shape = {img.height, img.width};
    t.data = img.pix;
    return t;
}

}  // namespace

void LossConfig::validate() const {
    if (lambda1 < 0.0 || lambda2 < 0.0) throw ConfigError("loss: weights must be >= 0");
    if (ssim_c1 <= 0.0 || ssim_c2 <= 0.0) throw ConfigError("loss: SSIM stabilizers must be > 0");
    if (ssim_window_sigma <= 0.0) throw ConfigError("loss: SSIM window sigma must be > 0");
    if (ssim_window_radius < 1) throw ConfigError("loss: SSIM window radius must be >= 1");
}

double ssim(const Tensor& x, const Tensor& y, const LossConfig& cfg) {
    require_same_shape(x, y, "ssim");
    const std::vector<double> k = ssim_kernel(cfg);

    Tensor xx = x, yy = y, xy = x;
    for (int i = 0; i < x.numel(); ++i) {
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const Tensor mu_x = filter_valid(x, k);
    const Tensor mu_y = filter_valid(y, k);
    const Tensor m_xx = filter_valid(xx, k);
    const Tensor m_yy = filter_valid(yy, k);
    const Tensor m_xy = filter_valid(xy, k);

    double acc = 0.0;
    for (int i = 0; i < mu_x.numel(); ++i) {
        const double mx = mu_x[i], my = mu_y[i];
        const double var_x = m_xx[i] - mx * mx;
        const double var_y = m_yy[i] - my * my;
        const double cov = m_xy[i] - mx * my;
        const double num = (2.0 * mx * my + cfg.ssim_c1) * (2.0 * cov + cfg.ssim_c2);
        const double den = (mx * mx + my * my + cfg.ssim_c1) * (var_x + var_y + cfg.ssim_c2);
        acc += num / den;
    }
    return acc / mu_x.numel();
}

double ssim(const Image& x, const Image& y, const LossConfig& cfg) {
    return ssim(to_hw(x), to_hw(y), cfg);
}

double loss_mse(const Tensor& out, const Tensor& ref) {
    require_same_shape(out, ref, "loss_mse");
    double acc = 0.0;
    for (int i = 0; i < out.numel(); ++i) {
        const double d = out[i] - ref[i];
        acc += d * d;
    }
    return acc / out.numel();
}

double loss_ssim(const Tensor& out, const Tensor& ref, const LossConfig& cfg) {
    return 1.0 - ssim(out, ref, cfg);
}

double loss_tv(const Tensor& out, const Tensor& ref, const LossConfig& cfg) {
    require_same_shape(out, ref, "loss_tv");
    const int h = out.rows(), w = out.cols();
    double acc = 0.0;
    auto res = [&](int y, int x) { return out.at2(y, x) - ref.at2(y, x); };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x + 1 < w; ++x) acc += std::abs(res(y, x + 1) - res(y, x));
    for (int y = 0; y + 1 < h; ++y)
        for (int x = 0; x < w; ++x) acc += std::abs(res(y + 1, x) - res(y, x));
    return cfg.tv_normalize ? acc / (static_cast<double>(h) * w) : acc;
}

double loss_total(const Tensor& out, const Tensor& ref, const LossConfig& cfg) {
    cfg.validate();
    return loss_mse(out, ref) + cfg.lambda1 * loss_ssim(out, ref, cfg) +
           cfg.lambda2 * loss_tv(out, ref, cfg);
}

double loss_mse(const Image& out, const Image& ref) { return loss_mse(to_hw(out), to_hw(ref)); }
double loss_ssim(const Image& out, const Image& ref, const LossConfig& cfg) {
    return loss_ssim(to_hw(out), to_hw(ref), cfg);
}
double loss_tv(const Image& out, const Image& ref, const LossConfig& cfg) {
    return loss_tv(to_hw(out), to_hw(ref), cfg);
}
double loss_total(const Image& out, const Image& ref, const LossConfig& cfg) {
    return loss_total(to_hw(out), to_hw(ref), cfg);
}

LossVars loss_total_var(Tape& t, Tape::Var out, Tape::Var ref, const LossConfig& cfg) {
    cfg.validate();
    require_same_shape(t.val(out), t.val(ref), "loss_total");

    const Tape::Var mse = t.mse_loss(out, ref);

    auto kernel = std::make_shared<const std::vector<double>>(ssim_kernel(cfg));
    const Tape::Var mu_x = t.gauss_valid(out, kernel);
    const Tape::Var mu_y = t.gauss_valid(ref, kernel);
    const Tape::Var m_xx = t.gauss_valid(t.mul(out, out), kernel);
    const Tape::Var m_yy = t.gauss_valid(t.mul(ref, ref), kernel);
    const Tape::Var m_xy = t.gauss_valid(t.mul(out, ref), kernel);
    const Tape::Var mxmy = t.mul(mu_x, mu_y);
    const Tape::Var mx2 = t.mul(mu_x, mu_x);
    const Tape::Var my2 = t.mul(mu_y, mu_y);
    const Tape::Var var_x = t.sub(m_xx, mx2);
    const Tape::Var var_y = t.sub(m_yy, my2);
    const Tape::Var cov = t.sub(m_xy, mxmy);
    const Tape::Var num =
        t.mul(t.add_scalar(t.scale(mxmy, 2.0), cfg.ssim_c1), t.add_scalar(t.scale(cov, 2.0), cfg.ssim_c2));
    const Tape::Var den =
        t.mul(t.add_scalar(t.add(mx2, my2), cfg.ssim_c1), t.add_scalar(t.add(var_x, var_y), cfg.ssim_c2));
    const Tape::Var ssim_mean = t.mean_all(t.div(num, den));
    const Tape::Var ssim_l = t.add_scalar(t.scale(ssim_mean, -1.0), 1.0);

    const Tape::Var tv = t.tv_sum(t.sub(out, ref), cfg.tv_normalize);

    const Tape::Var total =
        t.add(t.add(mse, t.scale(ssim_l, cfg.lambda1)), t.scale(tv, cfg.lambda2));
    return LossVars{total, mse, ssim_l, tv};
}

}  // namespace transfuse
