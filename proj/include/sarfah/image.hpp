#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sarfah {

// 2D grayscale raster, intensities conventionally in [0, 255].
struct Image {
    int64_t h = 0;
    int64_t w = 0;
    std::vector<double> px;

    Image() = default;
    Image(int64_t height, int64_t width, double fill = 0.0)
        : h(height), w(width), px(static_cast<size_t>(height * width), fill) {}

    double& at(int64_t y, int64_t x) { return px[y * w + x]; }
    double at(int64_t y, int64_t x) const { return px[y * w + x]; }
    int64_t size() const { return h * w; }
};

// PGM: binary P5 and ascii P2 accepted on read, maxval must be 255;
// writes binary P5 with values rounded and clamped to [0, 255].
Image read_pgm(const std::string& path);
void write_pgm(const std::string& path, const Image& img);

// 8-bit grayscale non-interlaced PNG (color type 0), inflated via zlib.
Image read_png_gray8(const std::string& path);

// Dispatch on file magic; throws std::runtime_error on unsupported content.
Image load_image(const std::string& path);

uint64_t image_checksum(const Image& img);

}  // namespace sarfah
