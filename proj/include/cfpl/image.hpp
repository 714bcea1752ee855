#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfpl/nn.hpp"

namespace cfpl {

// 8-bit RGB, row-major, interleaved channels.
struct RgbImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
};

// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path& path, const RgbImage& image);
RgbImage read_ppm(const std::filesystem::path& path);

// Source region to resample, in pixel units.
struct CropBox {
    double x0 = 0.0;
    double y0 = 0.0;
    double width = 0.0;
    double height = 0.0;
    bool flip = false;
};

CropBox full_frame(const RgbImage& image);
// Square crop covering a uniform [scale_min, 1] fraction of the area at a
// uniform position, mirrored with probability 1/2 when `allow_flip`.
CropBox random_resized_crop(const RgbImage& image, double scale_min, bool allow_flip, Rng& rng);

// Bilinear resample of `box` to size x size, written as CHW values in [0, 1].
void resample_chw(const RgbImage& image, const CropBox& box, std::size_t size, double* out);

}  // namespace cfpl
