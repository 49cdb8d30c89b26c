#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vlmbind/backend.hpp"

namespace vlmbind {

// Which layer/head performs each planted computation. The pipeline is
// staged: caption features condense into slot anchors, the matching head
// retrieves each described object's position code from the image, the
// position head derives the target position code at the last token
// (residual holds it through [position_layer, position_stage_end)), and
// the retrieval head turns that code into the target's features
// (residual holds them from retrieval_layer on).
struct StageSchedule {
    int condenser_layer = 1;
    int condenser_head = 0;
    int matching_layer = 3;
    int matching_head = 1;
    int position_layer = 5;
    int position_head = 2;
    int position_stage_end = 8;
    int retrieval_layer = 8;
    int retrieval_head = 3;
};

struct SyntheticBackendConfig {
    int layers = 12;
    int heads = 4;
    int hidden = 96;
    GridSpec grid{2, 2};
    std::vector<Cell> positions; // empty = all grid cells
    StageSchedule schedule{};

    double sigma = 0.0;                     // embedding noise scale
    double low_entropy_caption_noise = 0.0; // extra noise on caption-anchor position writes
    double low_entropy_last_noise = 0.0;    // extra noise on the last-token position write
    double attn_sharpness = 40.0;           // planted attention logit gain
    double raster_bias = 1.0;               // per-rank raster priority increment
    double position_grading = 0.5;          // slope of graded position similarity
    bool rotate_basis = true;               // mix planted directions by a seeded rotation
    uint64_t seed = 0;

    std::map<std::string, std::vector<std::string>> split_words; // tokenizer overrides

    std::vector<Cell> effective_positions() const;
};

class SyntheticBackend; // defined in synthetic.cpp

// Builds the deterministic planted-structure backend. Throws config_error
// on degenerate configs (width too small for the planted subspaces,
// unordered stage schedule, out-of-range planted heads).
std::unique_ptr<Backend> make_synthetic_backend(const SyntheticBackendConfig& config);

// Planted ground truth for tests and oracles, resolved against a backend
// created by make_synthetic_backend.
struct SyntheticOracle {
    explicit SyntheticOracle(Backend& backend); // throws unless synthetic

    Vec position_embedding(const Cell& cell) const;     // P_pos
    Vec feature_embedding(const Conjunction& c) const;  // F_color + F_shape
    std::pair<int, int> position_id_head() const;       // (layer, head)
    std::pair<int, int> feature_retrieval_head() const;
    std::pair<int, int> semantic_matching_head() const;
    std::vector<int> position_stage_layers() const;
    std::vector<int> feature_stage_layers() const;
    int repair_layer() const; // last position-stage layer

private:
    const SyntheticBackend* impl_;
};

// Key-value parsing for the CLI ("synthetic.layers = 12", ...).
SyntheticBackendConfig synthetic_config_from_kv(const KvConfig& kv, const GridSpec& grid,
                                                const std::vector<Cell>& positions);

void register_synthetic_backend_family();

} // namespace vlmbind
