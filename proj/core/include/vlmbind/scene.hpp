#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vlmbind/geometry.hpp"
#include "vlmbind/palette.hpp"

namespace vlmbind {

enum class Entropy : uint8_t { high, low };

inline const char* entropy_name(Entropy e) { return e == Entropy::high ? "high" : "low"; }

// A color-shape conjunction: one object identity.
struct Conjunction {
    Color color{};
    Shape shape{};
    auto operator<=>(const Conjunction&) const = default;
};

struct ObjectSpec {
    Color color{};
    Shape shape{};
    Cell cell{};
    Conjunction identity() const { return {color, shape}; }
    auto operator<=>(const ObjectSpec&) const = default;
};

// One synthetic multi-object stimulus. Objects are kept in raster order
// of their cells; target_index points at the queried / missing object.
struct SceneSpec {
    GridSpec grid{};
    int patch_px = kPatchPx;
    int object_patches = kObjectPatches;
    std::vector<ObjectSpec> objects;
    int target_index = 0;
    Entropy entropy = Entropy::high;
    int64_t trial_id = 0;

    const ObjectSpec& target() const { return objects.at(target_index); }
    auto operator<=>(const SceneSpec&) const = default;
};

enum class TaskKind : uint8_t { scene_description, color_retrieval, open_listing };

inline const char* task_kind_name(TaskKind k) {
    switch (k) {
        case TaskKind::scene_description: return "scene_description";
        case TaskKind::color_retrieval: return "color_retrieval";
        case TaskKind::open_listing: return "open_listing";
    }
    return "?";
}

struct TaskInstance {
    SceneSpec scene;
    std::string prompt_text;
    std::string answer_tokens;
    TaskKind task_kind = TaskKind::scene_description;
    // scene_description caption order (object indices, target excluded);
    // empty means raster order.
    std::vector<int> caption_order;
};

// Declarative generator config. `positions`, when set, restricts object
// placement to an explicit cell list (PCA layout, random configurations);
// otherwise every grid cell is used.
struct GeneratorConfig {
    GridSpec grid{};
    std::optional<std::vector<Cell>> positions;
    Entropy entropy = Entropy::high;
    int trials_per_combination = 1; // K
    uint64_t seed = 0;
    // Optional explicit conjunction set; when empty the per-grid protocol
    // selection applies (full product for low entropy, greedy max-min
    // subset for high entropy).
    std::vector<Conjunction> conjunctions;

    std::vector<Cell> effective_positions() const {
        if (positions) return *positions;
        std::vector<Cell> cells;
        cells.reserve(static_cast<size_t>(grid.rows) * grid.cols);
        for (int r = 0; r < grid.rows; ++r)
            for (int c = 0; c < grid.cols; ++c) cells.push_back({r, c});
        return cells;
    }
};

struct Dataset {
    std::vector<SceneSpec> scenes;
    GeneratorConfig config;
    std::vector<Conjunction> conjunction_set;
};

} // namespace vlmbind
