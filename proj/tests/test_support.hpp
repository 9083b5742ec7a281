#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "transfuse/image.hpp"
#include "transfuse/rng.hpp"

namespace test_support {

// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("transfuse_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

inline transfuse::Image random_image(int h, int w, transfuse::Rng& rng) {
    transfuse::Image img(h, w);
    for (double& v : img.pix) v = rng.uniform();
    return img;
}

// Smooth-ish synthetic content: gradients plus a few rectangles and blobs,
// so reconstruction targets have structure rather than pure noise.
inline transfuse::Image synthetic_image(int size, std::uint64_t seed) {
    transfuse::Rng rng(seed);
    transfuse::Image img(size, size);
    const double fx = rng.uniform(0.5, 3.0);
    const double fy = rng.uniform(0.5, 3.0);
    const double phase = rng.uniform(0.0, 6.28);
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
            img.at(y, x) = 0.5 + 0.25 * std::sin(fx * 6.28 * x / size + phase) *
                                     std::cos(fy * 6.28 * y / size);
    const int n_rects = 2 + rng.uniform_int(3);
    for (int i = 0; i < n_rects; ++i) {
        const int rw = size / 8 + rng.uniform_int(size / 4);
        const int rh = size / 8 + rng.uniform_int(size / 4);
        const int top = rng.uniform_int(std::max(1, size - rh));
        const int left = rng.uniform_int(std::max(1, size - rw));
        const double level = rng.uniform(0.05, 0.95);
        for (int y = top; y < std::min(size, top + rh); ++y)
            for (int x = left; x < std::min(size, left + rw); ++x)
                img.at(y, x) = 0.6 * level + 0.4 * img.at(y, x);
    }
    for (double& v : img.pix) v = std::clamp(v, 0.0, 1.0);
    return img;
}

inline void write_bytes(const std::filesystem::path& path, const unsigned char* data,
                        std::size_t len) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
}

// 2x1 RGB PNG, pixels (255,0,0) and (0,255,0).
inline const unsigned char kRedGreenPng[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48,
    0x44, 0x52, 0x00, 0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x01, 0x08, 0x02, 0x00, 0x00,
    0x00, 0x7b, 0x40, 0xe8, 0xdd, 0x00, 0x00, 0x00, 0x0f, 0x49, 0x44, 0x41, 0x54, 0x78,
    0x9c, 0x63, 0xf8, 0xcf, 0xc0, 0xc0, 0xf0, 0x9f, 0x01, 0x00, 0x07, 0xff, 0x01, 0xff,
    0x01, 0x7f, 0x89, 0xa7, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42,
    0x60, 0x82};

}  // namespace test_support
