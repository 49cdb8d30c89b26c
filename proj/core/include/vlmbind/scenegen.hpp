#pragma once

#include <vector>

#include "vlmbind/scene.hpp"

namespace vlmbind {

// Deterministic dataset generation: K trials for every (object identity,
// target position) combination; the remaining objects are permuted over
// the remaining positions. |scenes| == K * N * N for N positions.
Dataset generate_dataset(const GeneratorConfig& config);

// Protocol conjunction sets. Low entropy takes the full color x shape
// product of small sets; high entropy greedily picks the most distinct
// conjunctions (max-min joint disagreement) from larger sets.
std::vector<Conjunction> protocol_conjunctions(const GridSpec& grid, Entropy entropy,
                                               int n_positions);

// Greedy max-min selection of `count` conjunctions from the candidate
// product; deterministic (lexicographic seed and tie-breaks).
std::vector<Conjunction> most_distinct_conjunctions(int n_colors, int n_shapes, int count);

// Six fixed identities used by the dimensionality-reduction stimulus set.
std::vector<Conjunction> pca_conjunctions();
// 3x3 grid layout with the center column empty (six positions).
GeneratorConfig pca_generator_config(int trials_per_combination, uint64_t seed);

// Prompt construction for the three task templates.
TaskInstance build_prompt(const SceneSpec& scene, TaskKind kind);

// scene_description with an explicit caption order (indices into
// scene.objects, target excluded). Empty order = raster default.
TaskInstance build_prompt_with_order(const SceneSpec& scene, TaskKind kind,
                                     const std::vector<int>& caption_order);

// All M! assignments of the scene's object set to its occupied cells;
// the input assignment is included. Guarded at M <= 6.
std::vector<SceneSpec> permute_objects(const SceneSpec& scene);

} // namespace vlmbind
