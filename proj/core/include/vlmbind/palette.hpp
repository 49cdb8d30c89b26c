#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "vlmbind/errors.hpp"

namespace vlmbind {

enum class Color : uint8_t {
    red, green, blue, purple, yellow, orange, cyan, magenta, brown
};
enum class Shape : uint8_t {
    circle, triangle, square, star, heart, cross, diamond, pentagon, hexagon
};

inline constexpr int kNumColors = 9;
inline constexpr int kNumShapes = 9;

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
    bool operator==(const Rgb&) const = default;
};

constexpr std::array<std::string_view, kNumColors> kColorNames = {
    "red", "green", "blue", "purple", "yellow", "orange", "cyan", "magenta", "brown"};
constexpr std::array<std::string_view, kNumShapes> kShapeNames = {
    "circle", "triangle", "square", "star", "heart", "cross", "diamond", "pentagon", "hexagon"};

// Fixed raster palette; the stimulus protocol names categories only.
constexpr std::array<Rgb, kNumColors> kColorRgb = {{
    {230, 25, 75},   // red
    {60, 180, 75},   // green
    {0, 130, 200},   // blue
    {145, 30, 180},  // purple
    {255, 225, 25},  // yellow
    {245, 130, 48},  // orange
    {70, 240, 240},  // cyan
    {240, 50, 230},  // magenta
    {154, 99, 36},   // brown
}};

inline constexpr Rgb kBackground{255, 255, 255};

inline std::string_view color_name(Color c) { return kColorNames[static_cast<size_t>(c)]; }
inline std::string_view shape_name(Shape s) { return kShapeNames[static_cast<size_t>(s)]; }
inline Rgb color_rgb(Color c) { return kColorRgb[static_cast<size_t>(c)]; }

inline Color color_from_name(std::string_view name) {
    for (int i = 0; i < kNumColors; ++i)
        if (kColorNames[i] == name) return static_cast<Color>(i);
    throw usage_error("palette: unknown color name '" + std::string(name) + "'");
}

inline Shape shape_from_name(std::string_view name) {
    for (int i = 0; i < kNumShapes; ++i)
        if (kShapeNames[i] == name) return static_cast<Shape>(i);
    throw usage_error("palette: unknown shape name '" + std::string(name) + "'");
}

} // namespace vlmbind
