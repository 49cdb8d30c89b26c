#include "vlmbind/render.hpp"

#include <array>
#include <cmath>
#include <vector>

#include "vlmbind/geometry.hpp"

namespace vlmbind {

namespace {

struct P2 {
    double x, y;
};

bool point_in_polygon(const std::vector<P2>& poly, double x, double y) {
    bool inside = false;
    size_t j = poly.size() - 1;
    for (size_t i = 0; i < poly.size(); j = i++) {
        if ((poly[i].y > y) != (poly[j].y > y)) {
            const double t = (y - poly[i].y) / (poly[j].y - poly[i].y);
            if (x < poly[i].x + t * (poly[j].x - poly[i].x)) inside = !inside;
        }
    }
    return inside;
}

std::vector<P2> regular_polygon(int n, double radius, double start_deg) {
    std::vector<P2> poly;
    for (int i = 0; i < n; ++i) {
        const double a = (start_deg + 360.0 * i / n) * M_PI / 180.0;
        poly.push_back({radius * std::cos(a), radius * std::sin(a)});
    }
    return poly;
}

std::vector<P2> star_polygon() {
    std::vector<P2> poly;
    for (int i = 0; i < 10; ++i) {
        const double r = (i % 2 == 0) ? 0.95 : 0.40;
        const double a = (90.0 + 36.0 * i) * M_PI / 180.0;
        poly.push_back({r * std::cos(a), r * std::sin(a)});
    }
    return poly;
}

} // namespace

bool shape_covers(Shape shape, double x, double y) {
    // centered coordinates, y up
    const double u = 2.0 * x - 1.0;
    const double v = 1.0 - 2.0 * y;
    switch (shape) {
        case Shape::circle:
            return u * u + v * v <= 0.92 * 0.92;
        case Shape::square:
            return std::abs(u) <= 0.82 && std::abs(v) <= 0.82;
        case Shape::triangle: {
            static const std::vector<P2> tri = {{0.0, 0.92}, {-0.95, -0.78}, {0.95, -0.78}};
            return point_in_polygon(tri, u, v);
        }
        case Shape::star: {
            static const std::vector<P2> star = star_polygon();
            return point_in_polygon(star, u, v);
        }
        case Shape::heart: {
            // (x^2 + y^2 - 1)^3 <= x^2 y^3, rescaled into the box
            const double hx = u / 0.75;
            const double hy = (v + 0.15) / 0.75;
            const double q = hx * hx + hy * hy - 1.0;
            return q * q * q - hx * hx * hy * hy * hy <= 0.0;
        }
        case Shape::cross:
            return (std::abs(u) <= 0.32 && std::abs(v) <= 0.95) ||
                   (std::abs(v) <= 0.32 && std::abs(u) <= 0.95);
        case Shape::diamond:
            return std::abs(u) + std::abs(v) <= 0.95;
        case Shape::pentagon: {
            static const std::vector<P2> pent = regular_polygon(5, 0.95, 90.0);
            return point_in_polygon(pent, u, v);
        }
        case Shape::hexagon: {
            static const std::vector<P2> hex = regular_polygon(6, 0.95, 0.0);
            return point_in_polygon(hex, u, v);
        }
    }
    return false;
}

Image render_scene(const SceneSpec& scene) {
    std::vector<BBox> boxes;
    boxes.reserve(scene.objects.size());
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        for (size_t j = 0; j < i; ++j) {
            if (scene.objects[i].cell == scene.objects[j].cell) {
                throw invariant_violation("render: two objects share a grid cell");
            }
        }
        boxes.push_back(object_bbox(scene.grid, scene.objects[i].cell));
    }
    for (size_t i = 0; i < boxes.size(); ++i) {
        for (size_t j = 0; j < i; ++j) {
            if (boxes[i].overlaps(boxes[j])) {
                throw invariant_violation("render: object bounding boxes overlap");
            }
        }
    }

    Image img(scene.grid.width_px(), scene.grid.height_px());
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& obj = scene.objects[i];
        const auto& bb = boxes[i];
        const Rgb rgb = color_rgb(obj.color);
        for (int py = bb.y0; py < bb.y1; ++py) {
            for (int px = bb.x0; px < bb.x1; ++px) {
                // 2x2 subsample majority
                int hits = 0;
                for (int sy = 0; sy < 2; ++sy) {
                    for (int sx = 0; sx < 2; ++sx) {
                        const double fx = (px - bb.x0 + 0.25 + 0.5 * sx) / bb.width();
                        const double fy = (py - bb.y0 + 0.25 + 0.5 * sy) / bb.height();
                        if (shape_covers(obj.shape, fx, fy)) ++hits;
                    }
                }
                if (hits >= 2) img.set(px, py, rgb);
            }
        }
    }
    return img;
}

} // namespace vlmbind
