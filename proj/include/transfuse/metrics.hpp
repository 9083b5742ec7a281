#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "transfuse/image.hpp"
#include "transfuse/loss.hpp"

namespace transfuse {

struct MetricRow {
    std::string pair_id;
    double ssim_avg = 0.0;
    double qabf = 0.0;
    double mse_avg = 0.0;
    double entropy = 0.0;
    double spatial_frequency = 0.0;
    double average_gradient = 0.0;
};

struct FusionReport {
    std::vector<MetricRow> rows;  // sorted by pair_id
    MetricRow average;            // pair_id == "average"
};

// Mean of SSIM(fused, src1) and SSIM(fused, src2).
double metric_ssim_fusion(const Image& fused, const Image& src1, const Image& src2,
                          const LossConfig& cfg);

// Sobel gradient-transfer score: per pixel the magnitude-ratio times the
// orientation agreement between each source and the fused image, weighted by
// source gradient strength and averaged over both sources. A perfect copy
// scores 1; a constant fused image against textured sources scores near 0.
double metric_qabf(const Image& fused, const Image& src1, const Image& src2);

double image_entropy(const Image& img);      // bits over 256 quantized levels
double spatial_frequency(const Image& img);
double average_gradient(const Image& img);

MetricRow evaluate_pair(const std::string& pair_id, const Image& fused, const Image& src1,
                        const Image& src2, const LossConfig& cfg);

// Directory layout: <id>_a.png, <id>_b.png, <id>_fused.png (.pgm accepted).
FusionReport evaluate_dir(const std::filesystem::path& dir, const LossConfig& cfg);

void write_report_csv(const FusionReport& report, const std::filesystem::path& path);
void write_report_markdown(const FusionReport& report, const std::filesystem::path& path);

}  // namespace transfuse
