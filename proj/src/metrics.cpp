#include "transfuse/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "transfuse/image_io.hpp"

namespace transfuse {
namespace {

constexpr double kPi = 3.14159265358979323846;

struct GradientField {
    std::vector<double> mag;    // Sobel magnitude
    std::vector<double> angle;  // orientation folded to [0, pi)
    int height = 0, width = 0;
};

GradientField sobel(const Image& img) {
    const int h = img.height, w = img.width;
    GradientField f;
    f.height = h;
    f.width = w;
    f.mag.assign(static_cast<std::size_t>(h) * w, 0.0);
    f.angle.assign(static_cast<std::size_t>(h) * w, 0.0);
    auto px = [&](int y, int x) { return img.at(mirror_index(y, h), mirror_index(x, w)); };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double gx = (px(y - 1, x + 1) + 2.0 * px(y, x + 1) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2.0 * px(y, x - 1) + px(y + 1, x - 1));
            const double gy = (px(y + 1, x - 1) + 2.0 * px(y + 1, x) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2.0 * px(y - 1, x) + px(y - 1, x + 1));
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            f.mag[i] = std::sqrt(gx * gx + gy * gy);
            double a = std::atan2(gy, gx);  // (-pi, pi]
            if (a < 0.0) a += kPi;          // gradient direction sign is irrelevant
            if (a >= kPi) a -= kPi;
            f.angle[i] = a;
        }
    }
    return f;
}

// Per-pixel transfer score from one source into the fused image.
double transfer_score(double g_src, double a_src, double g_fused, double a_fused) {
    double mag_ratio;
    if (g_src == 0.0 && g_fused == 0.0) {
        mag_ratio = 1.0;
    } else {
        mag_ratio = std::min(g_src, g_fused) / std::max(g_src, g_fused);
    }
    double da = std::abs(a_src - a_fused);
    da = std::min(da, kPi - da);  // orientations live on a half circle
    const double ori = 1.0 - da / (kPi / 2.0);
    return mag_ratio * ori;
}

std::string format_cell(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

double metric_ssim_fusion(const Image& fused, const Image& src1, const Image& src2,
                          const LossConfig& cfg) {
    if (!fused.same_shape(src1) || !fused.same_shape(src2))
        throw ShapeError("metric_ssim_fusion: shape mismatch");
    return 0.5 * (ssim(fused, src1, cfg) + ssim(fused, src2, cfg));
}

double metric_qabf(const Image& fused, const Image& src1, const Image& src2) {
    if (!fused.same_shape(src1) || !fused.same_shape(src2))
        throw ShapeError("metric_qabf: shape mismatch");
    if (fused.height < 3 || fused.width < 3)
        throw ShapeError("metric_qabf: image too small for gradients");

    const GradientField gf = sobel(fused);
    const GradientField g1 = sobel(src1);
    const GradientField g2 = sobel(src2);

    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < gf.mag.size(); ++i) {
        const double q1 = transfer_score(g1.mag[i], g1.angle[i], gf.mag[i], gf.angle[i]);
        const double q2 = transfer_score(g2.mag[i], g2.angle[i], gf.mag[i], gf.angle[i]);
        num += q1 * g1.mag[i] + q2 * g2.mag[i];
        den += g1.mag[i] + g2.mag[i];
    }
    if (den == 0.0) return 1.0;  // nothing to transfer
    return num / den;
}

double image_entropy(const Image& img) {
    std::array<double, 256> hist{};
    for (const double v : img.pix) {
        const int level = static_cast<int>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
        hist[static_cast<std::size_t>(level)] += 1.0;
    }
    const double n = static_cast<double>(img.numel());
    double h = 0.0;
    for (const double c : hist) {
        if (c == 0.0) continue;
        const double p = c / n;
        h -= p * std::log2(p);
    }
    return h;
}

double spatial_frequency(const Image& img) {
    const int h = img.height, w = img.width;
    double rf = 0.0, cf = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 1; x < w; ++x) {
            const double d = img.at(y, x) - img.at(y, x - 1);
            rf += d * d;
        }
    for (int y = 1; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double d = img.at(y, x) - img.at(y - 1, x);
            cf += d * d;
        }
    const double n = static_cast<double>(h) * w;
    return std::sqrt(rf / n + cf / n);
}

double average_gradient(const Image& img) {
    const int h = img.height, w = img.width;
    if (h < 2 || w < 2) return 0.0;
    double acc = 0.0;
    for (int y = 0; y + 1 < h; ++y) {
        for (int x = 0; x + 1 < w; ++x) {
            const double dx = img.at(y, x + 1) - img.at(y, x);
            const double dy = img.at(y + 1, x) - img.at(y, x);
            acc += std::sqrt((dx * dx + dy * dy) / 2.0);
        }
    }
    return acc / (static_cast<double>(h - 1) * (w - 1));
}

MetricRow evaluate_pair(const std::string& pair_id, const Image& fused, const Image& src1,
                        const Image& src2, const LossConfig& cfg) {
    MetricRow row;
    row.pair_id = pair_id;
    row.ssim_avg = metric_ssim_fusion(fused, src1, src2, cfg);
    row.qabf = metric_qabf(fused, src1, src2);
    row.mse_avg = 0.5 * (loss_mse(fused, src1) + loss_mse(fused, src2));
    row.entropy = image_entropy(fused);
    row.spatial_frequency = spatial_frequency(fused);
    row.average_gradient = average_gradient(fused);
    return row;
}

FusionReport evaluate_dir(const std::filesystem::path& dir, const LossConfig& cfg) {
    if (!std::filesystem::is_directory(dir)) throw NotFoundError("no such directory: " + dir.string());

    struct PairPaths {
        std::filesystem::path a, b, fused;
    };
    std::map<std::string, PairPaths> pairs;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string stem = entry.path().stem().string();
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (ext != ".png" && ext != ".pgm") continue;
        auto ends_with = [&](const char* suffix) {
            const std::string s(suffix);
            return stem.size() > s.size() && stem.compare(stem.size() - s.size(), s.size(), s) == 0;
        };
        if (ends_with("_a")) {
            pairs[stem.substr(0, stem.size() - 2)].a = entry.path();
        } else if (ends_with("_b")) {
            pairs[stem.substr(0, stem.size() - 2)].b = entry.path();
        } else if (ends_with("_fused")) {
            pairs[stem.substr(0, stem.size() - 6)].fused = entry.path();
        }
    }
    if (pairs.empty()) throw LayoutError("no <id>_a/<id>_b/<id>_fused images in " + dir.string());

    FusionReport report;
    for (const auto& [id, paths] : pairs) {
        if (paths.a.empty() || paths.b.empty() || paths.fused.empty())
            throw LayoutError("incomplete pair '" + id + "' in " + dir.string());
        const Image a = load_image(paths.a);
        const Image b = load_image(paths.b);
        const Image fused = load_image(paths.fused);
        report.rows.push_back(evaluate_pair(id, fused, a, b, cfg));
    }

    MetricRow& avg = report.average;
    avg.pair_id = "average";
    for (const MetricRow& r : report.rows) {
        avg.ssim_avg += r.ssim_avg;
        avg.qabf += r.qabf;
        avg.mse_avg += r.mse_avg;
        avg.entropy += r.entropy;
        avg.spatial_frequency += r.spatial_frequency;
        avg.average_gradient += r.average_gradient;
    }
    const double n = static_cast<double>(report.rows.size());
    avg.ssim_avg /= n;
    avg.qabf /= n;
    avg.mse_avg /= n;
    avg.entropy /= n;
    avg.spatial_frequency /= n;
    avg.average_gradient /= n;
    return report;
}

void write_report_csv(const FusionReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write report: " + path.string());
    out << "pair_id,ssim_avg,qabf,mse_avg,entropy,spatial_frequency,average_gradient\n";
    auto emit = [&](const MetricRow& r) {
        out << r.pair_id << ',' << format_cell(r.ssim_avg) << ',' << format_cell(r.qabf) << ','
            << format_cell(r.mse_avg) << ',' << format_cell(r.entropy) << ','
            << format_cell(r.spatial_frequency) << ',' << format_cell(r.average_gradient) << '\n';
    };
    for (const MetricRow& r : report.rows) emit(r);
    emit(report.average);
}

void write_report_markdown(const FusionReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write report: " + path.string());
    out << "| pair | SSIM | Qabf | MSE | entropy | SF | AG |\n";
    out << "|------|------|------|-----|---------|----|----|\n";
    auto emit = [&](const MetricRow& r) {
        out << "| " << r.pair_id << " | " << format_cell(r.ssim_avg) << " | "
            << format_cell(r.qabf) << " | " << format_cell(r.mse_avg) << " | "
            << format_cell(r.entropy) << " | " << format_cell(r.spatial_frequency) << " | "
            << format_cell(r.average_gradient) << " |\n";
    };
    for (const MetricRow& r : report.rows) emit(r);
    emit(report.average);
}

}  // namespace transfuse
