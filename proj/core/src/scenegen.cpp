#include "vlmbind/scenegen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace vlmbind {

namespace {

int conjunction_disagreement(const Conjunction& a, const Conjunction& b) {
    return (a.color != b.color ? 1 : 0) + (a.shape != b.shape ? 1 : 0);
}

// Factor N into n_colors x n_shapes, as square as possible.
std::pair<int, int> low_entropy_factors(int n) {
    for (int s = static_cast<int>(std::sqrt(static_cast<double>(n))); s >= 1; --s) {
        if (n % s == 0) return {n / s, s};
    }
    return {n, 1};
}

const char* kCountWords[] = {"zero", "one", "two", "three", "four", "five", "six"};

} // namespace

std::vector<Conjunction> most_distinct_conjunctions(int n_colors, int n_shapes, int count) {
    if (n_colors < 1 || n_colors > kNumColors || n_shapes < 1 || n_shapes > kNumShapes) {
        throw config_error("scenegen: conjunction pool exceeds palette");
    }
    if (count < 1 || count > n_colors * n_shapes) {
        throw config_error("scenegen: cannot select " + std::to_string(count) +
                           " conjunctions from a " + std::to_string(n_colors) + "x" +
                           std::to_string(n_shapes) + " pool");
    }
    std::vector<Conjunction> candidates;
    for (int c = 0; c < n_colors; ++c)
        for (int s = 0; s < n_shapes; ++s)
            candidates.push_back({static_cast<Color>(c), static_cast<Shape>(s)});

    std::vector<Conjunction> picked;
    picked.push_back(candidates.front());
    std::vector<bool> used(candidates.size(), false);
    used[0] = true;
    while (static_cast<int>(picked.size()) < count) {
        int best = -1;
        int best_min = -1;
        for (size_t i = 0; i < candidates.size(); ++i) {
            if (used[i]) continue;
            int mind = 2;
            for (const auto& p : picked) mind = std::min(mind, conjunction_disagreement(candidates[i], p));
            if (mind > best_min) {
                best_min = mind;
                best = static_cast<int>(i);
            }
        }
        used[best] = true;
        picked.push_back(candidates[best]);
    }
    return picked;
}

std::vector<Conjunction> protocol_conjunctions(const GridSpec& grid, Entropy entropy,
                                               int n_positions) {
    (void)grid;
    const int n = n_positions;
    if (entropy == Entropy::low) {
        auto [nc, ns] = low_entropy_factors(n);
        if (nc > kNumColors || ns > kNumShapes) {
            throw config_error("scenegen: low-entropy product needs " + std::to_string(nc) +
                               " colors; palette has " + std::to_string(kNumColors));
        }
        std::vector<Conjunction> out;
        for (int c = 0; c < nc; ++c)
            for (int s = 0; s < ns; ++s)
                out.push_back({static_cast<Color>(c), static_cast<Shape>(s)});
        return out;
    }
    const int pool = std::min(kNumColors, std::max(n, 2));
    return most_distinct_conjunctions(pool, pool, n);
}

std::vector<Conjunction> pca_conjunctions() {
    return {{Color::red, Shape::circle},    {Color::green, Shape::triangle},
            {Color::blue, Shape::square},   {Color::purple, Shape::star},
            {Color::yellow, Shape::heart},  {Color::orange, Shape::cross}};
}

GeneratorConfig pca_generator_config(int trials_per_combination, uint64_t seed) {
    GeneratorConfig cfg;
    cfg.grid = GridSpec{3, 3};
    std::vector<Cell> cells;
    for (int r = 0; r < 3; ++r)
        for (int c : {0, 2}) cells.push_back({r, c});
    std::sort(cells.begin(), cells.end(), raster_less);
    cfg.positions = cells;
    cfg.entropy = Entropy::high;
    cfg.trials_per_combination = trials_per_combination;
    cfg.seed = seed;
    cfg.conjunctions = pca_conjunctions();
    return cfg;
}

Dataset generate_dataset(const GeneratorConfig& config) {
    if (config.trials_per_combination < 1) {
        throw config_error("scenegen: trials_per_combination must be >= 1");
    }
    std::vector<Cell> cells = config.effective_positions();
    if (cells.empty()) throw config_error("scenegen: no grid positions");
    std::sort(cells.begin(), cells.end(), raster_less);
    for (size_t i = 1; i < cells.size(); ++i) {
        if (cells[i] == cells[i - 1]) throw config_error("scenegen: duplicate grid position");
    }
    for (const auto& c : cells) {
        if (c.row < 0 || c.row >= config.grid.rows || c.col < 0 || c.col >= config.grid.cols) {
            throw config_error("scenegen: position outside grid");
        }
    }
    const int n_pos = static_cast<int>(cells.size());

    std::vector<Conjunction> identities = config.conjunctions;
    if (identities.empty()) {
        identities = protocol_conjunctions(config.grid, config.entropy, n_pos);
    }
    if (static_cast<int>(identities.size()) < n_pos) {
        throw config_error("scenegen: conjunction set smaller than the number of grid positions");
    }
    {
        std::set<Conjunction> uniq(identities.begin(), identities.end());
        if (uniq.size() != identities.size()) {
            throw config_error("scenegen: duplicate conjunction in set");
        }
    }

    const int n_ident = static_cast<int>(identities.size());
    const int k = config.trials_per_combination;
    std::mt19937_64 rng(config.seed);

    Dataset ds;
    ds.config = config;
    ds.config.positions = cells;
    ds.config.conjunctions = identities;
    ds.conjunction_set = identities;
    ds.scenes.reserve(static_cast<size_t>(k) * n_ident * n_pos);

    std::vector<int> others;
    int64_t trial_id = 0;
    for (int ident = 0; ident < n_ident; ++ident) {
        for (int pos = 0; pos < n_pos; ++pos) {
            for (int t = 0; t < k; ++t) {
                others.clear();
                for (int j = 0; j < n_ident; ++j)
                    if (j != ident) others.push_back(j);
                std::shuffle(others.begin(), others.end(), rng);

                SceneSpec scene;
                scene.grid = config.grid;
                scene.entropy = config.entropy;
                scene.trial_id = trial_id++;
                scene.objects.resize(n_pos);
                size_t next_other = 0;
                for (int p = 0; p < n_pos; ++p) {
                    int who = (p == pos) ? ident : others[next_other++];
                    scene.objects[p] = {identities[who].color, identities[who].shape, cells[p]};
                }
                scene.target_index = pos;
                ds.scenes.push_back(std::move(scene));
            }
        }
    }
    return ds;
}

TaskInstance build_prompt(const SceneSpec& scene, TaskKind kind) {
    return build_prompt_with_order(scene, kind, {});
}

TaskInstance build_prompt_with_order(const SceneSpec& scene, TaskKind kind,
                                     const std::vector<int>& caption_order) {
    TaskInstance inst;
    inst.scene = scene;
    inst.task_kind = kind;

    const int m = static_cast<int>(scene.objects.size());

    auto describe = [](const ObjectSpec& o) {
        return std::string(color_name(o.color)) + " " + std::string(shape_name(o.shape));
    };

    switch (kind) {
        case TaskKind::scene_description: {
            if (scene.target_index < 0 || scene.target_index >= m) {
                throw usage_error("scenegen: scene_description requires a target object");
            }
            std::vector<int> order = caption_order;
            if (order.empty()) {
                for (int i = 0; i < m; ++i)
                    if (i != scene.target_index) order.push_back(i);
            }
            if (static_cast<int>(order.size()) != m - 1) {
                throw usage_error("scenegen: caption order must list all non-target objects");
            }
            std::string p = "This is an image with a ";
            for (size_t i = 0; i < order.size(); ++i) {
                if (order[i] == scene.target_index) {
                    throw usage_error("scenegen: caption order may not include the target");
                }
                p += describe(scene.objects[order[i]]);
                if (order.size() == 1) {
                    p += " and a";
                } else if (i + 1 < order.size()) {
                    p += ", a ";
                } else {
                    p += ", and a";
                }
            }
            inst.prompt_text = p;
            inst.answer_tokens = describe(scene.target());
            inst.caption_order = order;
            break;
        }
        case TaskKind::color_retrieval: {
            if (scene.target_index < 0 || scene.target_index >= m) {
                throw usage_error("scenegen: color_retrieval requires a target object");
            }
            const Shape q = scene.target().shape;
            int hits = 0;
            for (const auto& o : scene.objects)
                if (o.shape == q) ++hits;
            if (hits != 1) {
                throw usage_error("scenegen: retrieval query shape is not unique in the scene");
            }
            inst.prompt_text = "In this image, the color of the " +
                               std::string(shape_name(q)) + " is";
            inst.answer_tokens = std::string(color_name(scene.target().color));
            break;
        }
        case TaskKind::open_listing: {
            if (scene.target_index >= 0) {
                throw usage_error("scenegen: open_listing takes no target object");
            }
            if (m < 1 || m >= static_cast<int>(std::size(kCountWords))) {
                throw usage_error("scenegen: open_listing supports 1..6 objects");
            }
            inst.prompt_text = std::string("The ") + kCountWords[m] +
                               " objects present in this image are 1.A";
            std::string ans;
            for (int i = 0; i < m; ++i) {
                if (i) ans += " ";
                ans += describe(scene.objects[i]);
            }
            inst.answer_tokens = ans;
            break;
        }
    }
    return inst;
}

std::vector<SceneSpec> permute_objects(const SceneSpec& scene) {
    const int m = static_cast<int>(scene.objects.size());
    if (m > 6) throw usage_error("scenegen: permute_objects requires <= 6 objects");

    std::vector<int> perm(m);
    std::iota(perm.begin(), perm.end(), 0);

    std::vector<SceneSpec> out;
    do {
        SceneSpec s = scene;
        for (int p = 0; p < m; ++p) {
            // object identity perm[p] moves to the cell at slot p
            s.objects[p].color = scene.objects[perm[p]].color;
            s.objects[p].shape = scene.objects[perm[p]].shape;
        }
        if (scene.target_index >= 0) {
            for (int p = 0; p < m; ++p) {
                if (perm[p] == scene.target_index) {
                    s.target_index = p;
                    break;
                }
            }
        }
        out.push_back(std::move(s));
    } while (std::next_permutation(perm.begin(), perm.end()));
    return out;
}

} // namespace vlmbind
