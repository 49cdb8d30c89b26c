#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <vector>

#include "vlmbind/errors.hpp"

namespace vlmbind {

inline constexpr int kPatchPx = 28;       // pixels per vision patch
inline constexpr int kObjectPatches = 2;  // object bbox side, in patches

struct Cell {
    int row = 0;
    int col = 0;
    auto operator<=>(const Cell&) const = default;
};

struct BBox {
    int x0 = 0; // inclusive, pixels
    int y0 = 0;
    int x1 = 0; // exclusive
    int y1 = 0;
    int width() const { return x1 - x0; }
    int height() const { return y1 - y0; }
    bool overlaps(const BBox& o) const {
        return x0 < o.x1 && o.x0 < x1 && y0 < o.y1 && o.y0 < y1;
    }
    auto operator<=>(const BBox&) const = default;
};

// Grid geometry. Image side length follows the stimulus protocol:
// a grid with n cells along an axis spans (4*n + 2) patches on that axis.
struct GridSpec {
    int rows = 2;
    int cols = 2;

    int height_patches() const { return 4 * rows + 2; }
    int width_patches() const { return 4 * cols + 2; }
    int height_px() const { return height_patches() * kPatchPx; }
    int width_px() const { return width_patches() * kPatchPx; }

    auto operator<=>(const GridSpec&) const = default;
};

// Object placement: center a 2x2-patch bbox in the (possibly fractional)
// cell, then snap the top-left corner down to the patch lattice.
inline BBox object_bbox(const GridSpec& grid, const Cell& cell) {
    if (cell.row < 0 || cell.row >= grid.rows || cell.col < 0 || cell.col >= grid.cols) {
        throw usage_error("geometry: cell outside grid bounds");
    }
    const double cell_h = static_cast<double>(grid.height_px()) / grid.rows;
    const double cell_w = static_cast<double>(grid.width_px()) / grid.cols;
    const double cy = (cell.row + 0.5) * cell_h;
    const double cx = (cell.col + 0.5) * cell_w;
    const int obj_px = kObjectPatches * kPatchPx;
    const int y0 = static_cast<int>(std::floor((cy - obj_px / 2.0) / kPatchPx)) * kPatchPx;
    const int x0 = static_cast<int>(std::floor((cx - obj_px / 2.0) / kPatchPx)) * kPatchPx;
    return BBox{x0, y0, x0 + obj_px, y0 + obj_px};
}

// Euclidean distance between cells, unit cell spacing.
inline double cell_distance(const Cell& a, const Cell& b) {
    const double dr = a.row - b.row;
    const double dc = a.col - b.col;
    return std::sqrt(dr * dr + dc * dc);
}

// Raster (row-major) comparison of cells.
inline bool raster_less(const Cell& a, const Cell& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
}

} // namespace vlmbind
