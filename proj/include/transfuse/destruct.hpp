#pragma once

#include <array>
#include <utility>
#include <vector>

#include "transfuse/image.hpp"
#include "transfuse/rng.hpp"

namespace transfuse {

// Axis-aligned rectangle inside a host image; the unit of destruction.
struct Subregion {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
};

// Monotone intensity map built from a cubic Bezier curve with endpoints
// pinned at (0,0) and (1,1). The lut tabulates y as a function of x on a
// uniform grid; after a flip the map is decreasing.
struct BezierMap {
    std::array<double, 2> p1{0.0, 0.0};
    std::array<double, 2> p2{0.0, 0.0};
    std::array<double, 2> p3{1.0, 1.0};
    std::array<double, 2> p4{1.0, 1.0};
    bool decreasing = false;
    std::vector<double> lut;

    double apply(double v) const;
};

struct TransformSpec {
    double prob_nonlinear = 0.6;
    double prob_brightness = 0.6;
    double prob_noise = 0.6;
    std::vector<double> gamma_choices = {0.3, 3.0};
    double blur_sigma = 3.0;
    int n_subregions = 4;
    int subregion_size = 16;
    int lut_resolution = 1024;
    // Ablation switches; a disabled transform never fires.
    bool enable_nonlinear = true;
    bool enable_brightness = true;
    bool enable_noise = true;

    void validate() const;
};

// One entry per subregion: which transforms fired and the parameters drawn.
struct DestructionEntry {
    Subregion region;
    bool nonlinear = false;
    bool brightness = false;
    bool noise = false;
    std::array<double, 2> bezier_p2{0.0, 0.0};
    std::array<double, 2> bezier_p3{0.0, 0.0};
    bool bezier_decreasing = false;
    double gamma = 0.0;
    double sigma = 0.0;
};

struct DestructionRecord {
    std::vector<DestructionEntry> entries;
};

std::vector<Subregion> sample_subregions(int h, int w, const TransformSpec& spec, Rng& rng);

// Deterministic construction from given midpoints; midpoints are reordered
// so x-coordinates ascend, which keeps x(t) monotone.
BezierMap make_bezier_map_from_points(std::array<double, 2> p2, std::array<double, 2> p3,
                                      bool decreasing, int resolution);

// Midpoints uniform in [0,1]^2, curve flipped with probability 1/2.
BezierMap make_bezier_map(Rng& rng, int resolution);

Image apply_nonlinear(const Image& region, const BezierMap& map);
Image apply_brightness(const Image& region, double gamma);
Image apply_noise(const Image& region, double sigma);

// Normalized 1-d Gaussian taps at radius ceil(3*sigma); the 2-d kernel is
// the outer product.
std::vector<double> gaussian_kernel_1d(double sigma);

// Applies the three transforms per subregion in the order nonlinear ->
// brightness -> noise, each gated by an independent uniform draw against its
// probability. Pixels outside the sampled subregions are untouched.
std::pair<Image, DestructionRecord> destroy(const Image& img, const TransformSpec& spec, Rng& rng);

}  // namespace transfuse
