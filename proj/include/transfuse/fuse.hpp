#pragma once

#include <string>

#include "transfuse/model.hpp"

namespace transfuse {

enum class FusionRuleKind { average, l1norm };

struct FusionRule {
    FusionRuleKind kind = FusionRuleKind::average;
    int l1_block_radius = 1;  // region-energy window radius

    void validate() const;
};

FusionRuleKind fusion_rule_from_name(const std::string& name);  // ConfigError on unknown
std::string fusion_rule_name(FusionRuleKind kind);

// Elementwise mean of two feature maps.
FeatureMap fuse_average(const FeatureMap& f1, const FeatureMap& f2);

// Region-energy weighting: channelwise l1 activity, block-averaged over a
// (2r+1)^2 window with mirrored borders, normalized across the two inputs.
// Zero total activity at a location falls back to equal weights.
FeatureMap fuse_l1norm(const FeatureMap& f1, const FeatureMap& f2, int radius);

FeatureMap apply_fusion_rule(const FeatureMap& f1, const FeatureMap& f2, const FusionRule& rule);

// decode(rule(encode(a), encode(b))), clamped to [0,1].
Image fuse_images(const Image& a, const Image& b, Model& model, const FusionRule& rule);

}  // namespace transfuse
