#include "cfpl/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace cfpl {

void write_ppm(const std::filesystem::path& path, const RgbImage& image) {
    if (image.pixels.size() != image.width * image.height * 3) throw std::invalid_argument("image buffer size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write image: " + path.string());
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) throw std::runtime_error("failed writing image: " + path.string());
}

RgbImage read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image: " + path.string());
    auto next_token = [&]() {
        std::string tok;
        char c = 0;
        while (in.get(c)) {
            if (c == '#') {
                std::string skip;
                std::getline(in, skip);
            } else if (!std::isspace(static_cast<unsigned char>(c))) {
                tok.push_back(c);
                break;
            }
        }
        while (in.get(c) && !std::isspace(static_cast<unsigned char>(c))) tok.push_back(c);
        return tok;
    };
    if (next_token() != "P6") throw std::runtime_error("not a binary PPM image: " + path.string());
    RgbImage img;
    try {
        img.width = std::stoul(next_token());
        img.height = std::stoul(next_token());
        if (std::stoul(next_token()) != 255) throw std::runtime_error("unsupported PPM maxval");
    } catch (const std::logic_error&) {
        throw std::runtime_error("malformed PPM header: " + path.string());
    }
    if (img.width == 0 || img.height == 0) throw std::runtime_error("empty image: " + path.string());
    img.pixels.resize(img.width * img.height * 3);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw std::runtime_error("truncated image data: " + path.string());
    }
    return img;
}

CropBox full_frame(const RgbImage& image) {
    return {0.0, 0.0, static_cast<double>(image.width), static_cast<double>(image.height), false};
}

CropBox random_resized_crop(const RgbImage& image, double scale_min, bool allow_flip, Rng& rng) {
    const double w = static_cast<double>(image.width);
    const double h = static_cast<double>(image.height);
    const double scale = scale_min + (1.0 - scale_min) * uniform01(rng);
    const double side_w = w * std::sqrt(scale);
    const double side_h = h * std::sqrt(scale);
    CropBox box;
    box.width = side_w;
    box.height = side_h;
    box.x0 = (w - side_w) * uniform01(rng);
    box.y0 = (h - side_h) * uniform01(rng);
    box.flip = allow_flip && uniform01(rng) < 0.5;
    return box;
}

void resample_chw(const RgbImage& image, const CropBox& box, std::size_t size, double* out) {
    const double sx = box.width / static_cast<double>(size);
    const double sy = box.height / static_cast<double>(size);
    const double max_x = static_cast<double>(image.width - 1);
    const double max_y = static_cast<double>(image.height - 1);
    for (std::size_t i = 0; i < size; ++i) {
        const double y = std::clamp(box.y0 + (static_cast<double>(i) + 0.5) * sy - 0.5, 0.0, max_y);
        const auto y0 = static_cast<std::size_t>(y);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1);
        const double fy = y - static_cast<double>(y0);
        for (std::size_t j = 0; j < size; ++j) {
            const std::size_t col = box.flip ? size - 1 - j : j;
            const double x = std::clamp(box.x0 + (static_cast<double>(col) + 0.5) * sx - 0.5, 0.0, max_x);
            const auto x0 = static_cast<std::size_t>(x);
            const std::size_t x1 = std::min(x0 + 1, image.width - 1);
            const double fx = x - static_cast<double>(x0);
            for (std::size_t c = 0; c < 3; ++c) {
                const double top = image.at(x0, y0, c) * (1.0 - fx) + image.at(x1, y0, c) * fx;
                const double bottom = image.at(x0, y1, c) * (1.0 - fx) + image.at(x1, y1, c) * fx;
                out[(c * size + i) * size + j] = std::clamp((top * (1.0 - fy) + bottom * fy) / 255.0, 0.0, 1.0);
            }
        }
    }
}

}  // namespace cfpl
