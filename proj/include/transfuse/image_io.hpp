#pragma once

#include <filesystem>

#include "transfuse/image.hpp"

namespace transfuse {

// Loads an 8-bit PNG (gray or RGB) or binary PGM (P5). Color is converted
// with BT.601 luma, samples are divided by the file's max value.
Image load_image(const std::filesystem::path& path);

// Writers pick the format from the extension: .png or .pgm. Pixels are
// rounded to 8-bit.
void save_image(const std::filesystem::path& path, const Image& img);

void save_png(const std::filesystem::path& path, const Image& img);
void save_pgm(const std::filesystem::path& path, const Image& img);

}  // namespace transfuse
