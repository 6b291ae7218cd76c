#pragma once

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <png.h>

#include "grevnet/tensor.hpp"

namespace grevnet {

/// 8-bit pixel grid plus the value range mapped onto [0, 255].
struct ImageGrid {
    std::size_t width = 0, height = 0, channels = 1;
    std::vector<unsigned char> pixels;  // row-major, interleaved channels
    double low = 0, high = 0;
};

/// Tiles n x C x H x W images into rows of `cols` with a one-pixel gap, min-max
/// normalised over the whole grid. C must be 1 or 3.
template <typename T>
ImageGrid make_grid(const Tensor<T>& images, std::size_t cols) {
    if (images.rank() != 4) throw ShapeError("make_grid: expected n x C x H x W, got " + shape_string(images.shape()));
    const std::size_t n = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
    if (c != 1 && c != 3) throw ShapeError("make_grid: 1 or 3 channels required");
    if (cols == 0) throw ValueError("make_grid: cols must be positive");
    check_finite(images, "make_grid");
    cols = std::min(cols, n);
    const std::size_t rows = (n + cols - 1) / cols;
    ImageGrid g;
    g.channels = c;
    g.width = cols * (w + 1) - 1;
    g.height = rows * (h + 1) - 1;
    g.pixels.assign(g.width * g.height * c, 0);
    g.low = std::numeric_limits<double>::infinity();
    g.high = -g.low;
    for (auto v : images) {
        g.low = std::min(g.low, double(v));
        g.high = std::max(g.high, double(v));
    }
    const double span = g.high > g.low ? g.high - g.low : 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t r0 = (i / cols) * (h + 1), c0 = (i % cols) * (w + 1);
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double v = (double(images(i, ch, y, x)) - g.low) / span;
                    g.pixels[((r0 + y) * g.width + c0 + x) * c + ch] =
                        static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
                }
    }
    return g;
}

/// Writes the grid as PNG and its normalisation range to `<path>.txt`.
inline void write_png(const std::string& path, const ImageGrid& g) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw DataError("cannot write " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        std::fclose(fp);
        png_destroy_write_struct(&png, nullptr);
        throw DataError("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw DataError("libpng failed writing " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(g.width), png_uint_32(g.height), 8,
                 g.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < g.height; ++y)
        png_write_row(png, g.pixels.data() + y * g.width * g.channels);
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);

    std::ofstream side(path + ".txt");
    side << std::setprecision(17) << "min " << g.low << "\nmax " << g.high << "\n";
    if (!side) throw DataError("cannot write " + path + ".txt");
}

template <typename T>
void save_grid(const std::string& path, const Tensor<T>& images, std::size_t cols) {
    write_png(path, make_grid(images, cols));
}

} // namespace grevnet
