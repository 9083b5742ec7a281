#include "transfuse/image.hpp"

#include <algorithm>
#include <cmath>

namespace transfuse {

int mirror_index(int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) {
        if (i < 0) i = -1 - i;
        if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
}

Image bilinear_resize(const Image& img, int target_h, int target_w) {
    if (img.height == target_h && img.width == target_w) return img;

    Image out(target_h, target_w);
    const double sy = target_h > 1 ? static_cast<double>(img.height - 1) / (target_h - 1) : 0.0;
    const double sx = target_w > 1 ? static_cast<double>(img.width - 1) / (target_w - 1) : 0.0;
    for (int r = 0; r < target_h; ++r) {
        const double fy = r * sy;
        const int y0 = std::min(static_cast<int>(fy), img.height - 1);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int c = 0; c < target_w; ++c) {
            const double fx = c * sx;
            const int x0 = std::min(static_cast<int>(fx), img.width - 1);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            const double top = img.at(y0, x0) * (1.0 - wx) + img.at(y0, x1) * wx;
            const double bot = img.at(y1, x0) * (1.0 - wx) + img.at(y1, x1) * wx;
            out.at(r, c) = top * (1.0 - wy) + bot * wy;
        }
    }
    return out;
}

Tensor image_to_tensor(const Image& img) {
    Tensor t({1, img.height, img.width});
    t.data = img.pix;
    return t;
}

Image tensor_to_image_clamped(const Tensor& t) {
    const int h = t.dim(t.ndim() - 2);
    const int w = t.dim(t.ndim() - 1);
    Image img(h, w);
    for (int i = 0; i < h * w; ++i) img.pix[i] = std::clamp(t[i], 0.0, 1.0);
    return img;
}

bool Tensor::all_finite() const {
    for (const double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::squared_norm() const {
    double s = 0.0;
    for (const double v : data) s += v * v;
    return s;
}

}  // namespace transfuse
