#pragma once

#include "vlmbind/image.hpp"
#include "vlmbind/scene.hpp"

namespace vlmbind {

// Rasterizes a scene: uniform background, each object drawn as a filled
// shape inside its patch-aligned 2x2-patch bounding box. Deterministic.
Image render_scene(const SceneSpec& scene);

// Filled-shape test in normalized bbox coordinates ([0,1] x [0,1],
// y down). Exposed for the rasterization tests.
bool shape_covers(Shape shape, double x, double y);

} // namespace vlmbind
