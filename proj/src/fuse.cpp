#include "transfuse/fuse.hpp"

#include <cmath>

namespace transfuse {

void FusionRule::validate() const {
    if (l1_block_radius < 0) throw ConfigError("fusion: l1_block_radius must be >= 0");
}

FusionRuleKind fusion_rule_from_name(const std::string& name) {
    if (name == "average") return FusionRuleKind::average;
    if (name == "l1norm") return FusionRuleKind::l1norm;
    throw ConfigError("unknown fusion rule '" + name + "' (expected average or l1norm)");
}

std::string fusion_rule_name(FusionRuleKind kind) {
    return kind == FusionRuleKind::average ? "average" : "l1norm";
}

FeatureMap fuse_average(const FeatureMap& f1, const FeatureMap& f2) {
    if (!f1.same_shape(f2)) throw ShapeError("fuse_average: shape mismatch");
    FeatureMap out = f1;
    for (std::size_t i = 0; i < out.values.size(); ++i)
        out.values[i] = (f1.values[i] + f2.values[i]) / 2.0;
    return out;
}

namespace {

// Channelwise l1 activity, then a box average over a (2r+1)^2 window with
// mirrored borders.
std::vector<double> region_energy(const FeatureMap& f, int radius) {
    const int h = f.height, w = f.width;
    std::vector<double> act(static_cast<std::size_t>(h) * w, 0.0);
    for (int c = 0; c < f.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                act[static_cast<std::size_t>(y) * w + x] += std::abs(f.at(c, y, x));
    if (radius == 0) return act;

    std::vector<double> blurred(act.size());
    const double inv = 1.0 / ((2.0 * radius + 1) * (2.0 * radius + 1));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int dy = -radius; dy <= radius; ++dy)
                for (int dx = -radius; dx <= radius; ++dx)
                    acc += act[static_cast<std::size_t>(mirror_index(y + dy, h)) * w +
                               mirror_index(x + dx, w)];
            blurred[static_cast<std::size_t>(y) * w + x] = acc * inv;
        }
    }
    return blurred;
}

}  // namespace

FeatureMap fuse_l1norm(const FeatureMap& f1, const FeatureMap& f2, int radius) {
    if (!f1.same_shape(f2)) throw ShapeError("fuse_l1norm: shape mismatch");
    if (radius < 0) throw ConfigError("fuse_l1norm: radius must be >= 0");
    const std::vector<double> e1 = region_energy(f1, radius);
    const std::vector<double> e2 = region_energy(f2, radius);

    FeatureMap out = f1;
    const int h = f1.height, w = f1.width;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * w + x;
            const double total = e1[i] + e2[i];
            const double w1 = total > 0.0 ? e1[i] / total : 0.5;
            const double w2 = total > 0.0 ? e2[i] / total : 0.5;
            for (int c = 0; c < f1.channels; ++c)
                out.at(c, y, x) = w1 * f1.at(c, y, x) + w2 * f2.at(c, y, x);
        }
    }
    return out;
}

FeatureMap apply_fusion_rule(const FeatureMap& f1, const FeatureMap& f2, const FusionRule& rule) {
    rule.validate();
    return rule.kind == FusionRuleKind::average ? fuse_average(f1, f2)
                                                : fuse_l1norm(f1, f2, rule.l1_block_radius);
}

Image fuse_images(const Image& a, const Image& b, Model& model, const FusionRule& rule) {
    if (!a.same_shape(b)) throw ShapeError("fuse_images: source sizes differ");
    const FeatureMap fa = model.encode_image(a);
    const FeatureMap fb = model.encode_image(b);
    const FeatureMap fused = apply_fusion_rule(fa, fb, rule);
    return model.decode_feature(fused);
}

}  // namespace transfuse
