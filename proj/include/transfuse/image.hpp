#pragma once

#include <vector>

#include "transfuse/errors.hpp"
#include "transfuse/tensor.hpp"

namespace transfuse {

// 2-d grayscale raster, row-major, values in [0, 1].
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pix;

    Image() = default;
    Image(int h, int w) : height(h), width(w), pix(static_cast<std::size_t>(h) * w, 0.0) {}

    static Image constant(int h, int w, double v) {
        Image img(h, w);
        std::fill(img.pix.begin(), img.pix.end(), v);
        return img;
    }

    double& at(int r, int c) { return pix[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return pix[static_cast<std::size_t>(r) * width + c]; }

    int numel() const { return height * width; }
    bool same_shape(const Image& o) const { return height == o.height && width == o.width; }
};

// Bilinear resample with corner-aligned sampling; a same-size resize is the
// exact identity.
Image bilinear_resize(const Image& img, int target_h, int target_w);

// Mirror an index into [0, n) by repeated edge-inclusive reflection.
// Handles offsets larger than n.
int mirror_index(int i, int n);

Tensor image_to_tensor(const Image& img);       // [1, H, W]
Image tensor_to_image_clamped(const Tensor& t); // clamps to [0, 1]

}  // namespace transfuse
