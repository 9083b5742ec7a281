#include "transfuse/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

namespace transfuse {
namespace {

constexpr double kLumaR = 0.299;
constexpr double kLumaG = 0.587;
constexpr double kLumaB = 0.114;

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// --- PGM (P5) ---

int pgm_next_value(std::istream& in) {
    // Skips whitespace and '#' comments between header tokens.
    for (;;) {
        const int c = in.peek();
        if (c == EOF) throw DecodeError("pgm: truncated header");
        if (c == '#') {
            std::string line;
            std::getline(in, line);
            continue;
        }
        if (std::isspace(c)) {
            in.get();
            continue;
        }
        break;
    }
    int v = -1;
    in >> v;
    if (!in || v < 0) throw DecodeError("pgm: bad header value");
    return v;
}

Image load_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("cannot open " + path.string());
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (magic[0] != 'P' || magic[1] != '5') throw DecodeError("pgm: not a P5 file");
    const int w = pgm_next_value(in);
    const int h = pgm_next_value(in);
    const int maxval = pgm_next_value(in);
    if (w <= 0 || h <= 0) throw DecodeError("pgm: bad dimensions");
    if (maxval <= 0 || maxval > 255) throw DecodeError("pgm: only 8-bit maxval supported");
    in.get();  // single whitespace after maxval

    std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (in.gcount() != static_cast<std::streamsize>(raw.size()))
        throw DecodeError("pgm: truncated pixel data");

    Image img(h, w);
    const double scale = 1.0 / maxval;
    for (std::size_t i = 0; i < raw.size(); ++i) img.pix[i] = raw[i] * scale;
    return img;
}

// --- PNG via libpng ---

Image load_png(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw NotFoundError("cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DecodeError("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DecodeError("png: allocation failed");
    }

    std::vector<png_bytep> row_ptrs;
    std::vector<unsigned char> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("png: corrupt file " + path.string());
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("png: 16-bit depth not supported");
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int channels = png_get_channels(png, info);
    if (channels != 1 && channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DecodeError("png: unsupported channel layout");
    }

    const std::size_t stride = png_get_rowbytes(png, info);
    buffer.resize(stride * h);
    row_ptrs.resize(h);
    for (png_uint_32 r = 0; r < h; ++r) row_ptrs[r] = buffer.data() + r * stride;
    png_read_image(png, row_ptrs.data());
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(static_cast<int>(h), static_cast<int>(w));
    for (png_uint_32 r = 0; r < h; ++r) {
        const unsigned char* row = buffer.data() + r * stride;
        for (png_uint_32 c = 0; c < w; ++c) {
            double v;
            if (channels == 1) {
                v = row[c] / 255.0;
            } else {
                const unsigned char* p = row + 3 * c;
                v = (kLumaR * p[0] + kLumaG * p[1] + kLumaB * p[2]) / 255.0;
            }
            img.at(static_cast<int>(r), static_cast<int>(c)) = v;
        }
    }
    return img;
}

unsigned char quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

std::string lower_ext(const std::filesystem::path& path) {
    std::string e = path.extension().string();
    std::transform(e.begin(), e.end(), e.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

}  // namespace

Image load_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw NotFoundError("no such file: " + path.string());

    std::ifstream probe(path, std::ios::binary);
    unsigned char magic[8] = {0};
    probe.read(reinterpret_cast<char*>(magic), 8);
    probe.close();

    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (std::memcmp(magic, png_sig, 8) == 0) return load_png(path);
    if (magic[0] == 'P' && magic[1] == '5') return load_pgm(path);
    throw DecodeError("unsupported format: " + path.string());
}

void save_pgm(const std::filesystem::path& path, const Image& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << "P5\n" << img.width << " " << img.height << "\n255\n";
    std::vector<unsigned char> raw(static_cast<std::size_t>(img.numel()));
    for (int i = 0; i < img.numel(); ++i) raw[i] = quantize(img.pix[i]);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw Error("short write: " + path.string());
}

void save_png(const std::filesystem::path& path, const Image& img) {
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw Error("cannot write " + path.string());

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw Error("png: allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("png: write failed for " + path.string());
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<unsigned char> row(static_cast<std::size_t>(img.width));
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) row[c] = quantize(img.at(r, c));
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void save_image(const std::filesystem::path& path, const Image& img) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") {
        save_png(path, img);
    } else if (ext == ".pgm") {
        save_pgm(path, img);
    } else {
        throw ConfigError("unsupported output extension: " + ext);
    }
}

}  // namespace transfuse
