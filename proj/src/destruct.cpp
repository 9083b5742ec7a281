#include "transfuse/destruct.hpp"

#include <algorithm>
#include <cmath>

namespace transfuse {
namespace {

struct CurvePoint {
    double x;
    double y;
};

CurvePoint bezier_eval(const BezierMap& m, double t) {
    const double u = 1.0 - t;
    const double b1 = u * u * u;
    const double b2 = 3.0 * u * u * t;
    const double b3 = 3.0 * u * t * t;
    const double b4 = t * t * t;
    return {b1 * m.p1[0] + b2 * m.p2[0] + b3 * m.p3[0] + b4 * m.p4[0],
            b1 * m.p1[1] + b2 * m.p2[1] + b3 * m.p3[1] + b4 * m.p4[1]};
}

Image extract(const Image& img, const Subregion& r) {
    Image block(r.height, r.width);
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x) block.at(y, x) = img.at(r.top + y, r.left + x);
    return block;
}

void paste(Image& img, const Subregion& r, const Image& block) {
    for (int y = 0; y < r.height; ++y)
        for (int x = 0; x < r.width; ++x) img.at(r.top + y, r.left + x) = block.at(y, x);
}

}  // namespace

void TransformSpec::validate() const {
    auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!in_unit(prob_nonlinear) || !in_unit(prob_brightness) || !in_unit(prob_noise))
        throw ConfigError("transform: probabilities must lie in [0,1]");
    if (blur_sigma <= 0.0) throw ConfigError("transform: blur_sigma must be > 0");
    if (n_subregions < 1) throw ConfigError("transform: n_subregions must be >= 1");
    if (subregion_size < 2) throw ConfigError("transform: subregion_size must be >= 2");
    if (lut_resolution < 64) throw ConfigError("transform: lut_resolution must be >= 64");
    if (gamma_choices.empty()) throw ConfigError("transform: gamma_choices must not be empty");
    for (const double g : gamma_choices)
        if (g <= 0.0) throw ConfigError("transform: gamma values must be > 0");
}

std::vector<Subregion> sample_subregions(int h, int w, const TransformSpec& spec, Rng& rng) {
    const int s = spec.subregion_size;
    if (s > h || s > w) throw ConfigError("subregion_size exceeds image dimensions");
    std::vector<Subregion> out;
    out.reserve(static_cast<std::size_t>(spec.n_subregions));
    for (int i = 0; i < spec.n_subregions; ++i) {
        const int top = rng.uniform_int(h - s + 1);
        const int left = rng.uniform_int(w - s + 1);
        out.push_back({top, left, s, s});
    }
    return out;
}

double BezierMap::apply(double v) const {
    const int n = static_cast<int>(lut.size());
    const double u = std::clamp(v, 0.0, 1.0) * (n - 1);
    const int i = std::min(static_cast<int>(u), n - 2);
    const double f = u - i;
    return lut[i] + (lut[i + 1] - lut[i]) * f;
}

BezierMap make_bezier_map_from_points(std::array<double, 2> p2, std::array<double, 2> p3,
                                      bool decreasing, int resolution) {
    if (resolution < 64) throw ConfigError("bezier: resolution must be >= 64");
    BezierMap m;
    m.p1 = {0.0, 0.0};
    m.p4 = {1.0, 1.0};
    if (p2[0] > p3[0]) std::swap(p2, p3);  // sorted x keeps x(t) monotone
    m.p2 = p2;
    m.p3 = p3;
    m.decreasing = decreasing;

    // Dense parametric samples; x is monotone non-decreasing in t.
    std::vector<CurvePoint> pts(static_cast<std::size_t>(resolution));
    for (int k = 0; k < resolution; ++k) {
        pts[static_cast<std::size_t>(k)] = bezier_eval(m, static_cast<double>(k) / (resolution - 1));
    }

    // Invert piecewise-linearly onto a uniform x grid.
    m.lut.assign(static_cast<std::size_t>(resolution), 0.0);
    int k = 0;
    for (int i = 0; i < resolution; ++i) {
        const double x = static_cast<double>(i) / (resolution - 1);
        while (k + 1 < resolution - 1 && pts[static_cast<std::size_t>(k) + 1].x < x) ++k;
        const CurvePoint& a = pts[static_cast<std::size_t>(k)];
        const CurvePoint& b = pts[static_cast<std::size_t>(k) + 1];
        const double dx = b.x - a.x;
        double y;
        if (dx <= 0.0) {
            y = 0.5 * (a.y + b.y);
        } else {
            const double f = std::clamp((x - a.x) / dx, 0.0, 1.0);
            y = a.y + (b.y - a.y) * f;
        }
        m.lut[static_cast<std::size_t>(i)] = std::clamp(y, 0.0, 1.0);
    }
    m.lut.front() = 0.0;
    m.lut.back() = 1.0;
    if (decreasing)
        for (double& y : m.lut) y = 1.0 - y;
    return m;
}

BezierMap make_bezier_map(Rng& rng, int resolution) {
    const std::array<double, 2> p2{rng.uniform(), rng.uniform()};
    const std::array<double, 2> p3{rng.uniform(), rng.uniform()};
    const bool flip = rng.bernoulli(0.5);
    return make_bezier_map_from_points(p2, p3, flip, resolution);
}

Image apply_nonlinear(const Image& region, const BezierMap& map) {
    Image out = region;
    for (double& v : out.pix) v = map.apply(v);
    return out;
}

Image apply_brightness(const Image& region, double gamma) {
    if (gamma <= 0.0) throw ConfigError("gamma must be > 0");
    Image out = region;
    for (double& v : out.pix) v = std::pow(v, gamma);
    return out;
}

std::vector<double> gaussian_kernel_1d(double sigma) {
    if (sigma <= 0.0) throw ConfigError("blur sigma must be > 0");
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

Image apply_noise(const Image& region, double sigma) {
    const std::vector<double> k = gaussian_kernel_1d(sigma);
    const int radius = (static_cast<int>(k.size()) - 1) / 2;
    const int h = region.height;
    const int w = region.width;

    // Separable pass, mirrored at the region borders.
    Image tmp(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += k[static_cast<std::size_t>(d + radius)] * region.at(y, mirror_index(x + d, w));
            tmp.at(y, x) = acc;
        }
    }
    Image out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int d = -radius; d <= radius; ++d)
                acc += k[static_cast<std::size_t>(d + radius)] * tmp.at(mirror_index(y + d, h), x);
            out.at(y, x) = acc;
        }
    }
    return out;
}

std::pair<Image, DestructionRecord> destroy(const Image& img, const TransformSpec& spec, Rng& rng) {
    spec.validate();
    Image out = img;
    DestructionRecord record;
    const std::vector<Subregion> regions = sample_subregions(img.height, img.width, spec, rng);

    for (const Subregion& region : regions) {
        DestructionEntry entry;
        entry.region = region;
        Image block = extract(out, region);

        const double r_nl = rng.uniform();
        if (spec.enable_nonlinear && r_nl < spec.prob_nonlinear) {
            const BezierMap map = make_bezier_map(rng, spec.lut_resolution);
            block = apply_nonlinear(block, map);
            entry.nonlinear = true;
            entry.bezier_p2 = map.p2;
            entry.bezier_p3 = map.p3;
            entry.bezier_decreasing = map.decreasing;
        }

        const double r_b = rng.uniform();
        if (spec.enable_brightness && r_b < spec.prob_brightness) {
            const double gamma =
                spec.gamma_choices[static_cast<std::size_t>(rng.uniform_int(
                    static_cast<int>(spec.gamma_choices.size())))];
            block = apply_brightness(block, gamma);
            entry.brightness = true;
            entry.gamma = gamma;
        }

        const double r_ns = rng.uniform();
        if (spec.enable_noise && r_ns < spec.prob_noise) {
            block = apply_noise(block, spec.blur_sigma);
            entry.noise = true;
            entry.sigma = spec.blur_sigma;
        }

        paste(out, region, block);
        record.entries.push_back(entry);
    }
    return {std::move(out), std::move(record)};
}

}  // namespace transfuse
