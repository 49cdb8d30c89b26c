#pragma once

#include <cstdint>
#include <vector>

#include "vlmbind/palette.hpp"

namespace vlmbind {

// Dense 8-bit RGB raster, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels; // 3 * width * height

    Image() = default;
    Image(int w, int h, Rgb fill = kBackground) : width(w), height(h), pixels(3u * w * h) {
        for (int i = 0; i < w * h; ++i) {
            pixels[3 * i] = fill.r;
            pixels[3 * i + 1] = fill.g;
            pixels[3 * i + 2] = fill.b;
        }
    }

    Rgb get(int x, int y) const {
        const size_t i = 3u * (static_cast<size_t>(y) * width + x);
        return {pixels[i], pixels[i + 1], pixels[i + 2]};
    }
    void set(int x, int y, Rgb c) {
        const size_t i = 3u * (static_cast<size_t>(y) * width + x);
        pixels[i] = c.r;
        pixels[i + 1] = c.g;
        pixels[i + 2] = c.b;
    }
    bool operator==(const Image&) const = default;
};

} // namespace vlmbind
