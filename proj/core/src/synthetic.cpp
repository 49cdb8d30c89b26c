#include "vlmbind/synthetic.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "vlmbind/errors.hpp"
#include "vlmbind/scenegen.hpp"

namespace vlmbind {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c = 0, uint64_t d = 0) {
    uint64_t h = splitmix64(a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    h = splitmix64(h ^ d);
    return h;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

struct SeqToken {
    enum class Kind : uint8_t { bos, image, word };
    enum class Role : uint8_t {
        none,
        cap_color,   // C_n (first sub-token)
        cap_shape,   // S_n
        cap_comma,   // comma after slot n
        query_shape, // retrieval template shape word
        gen_color,   // generated color token of pair n
        gen_shape,   // generated shape token of pair n
    };
    Kind kind = Kind::word;
    int vocab_id = -1;
    int object_index = -1; // image: owning object (raster index) or -1
    int cell_index = -1;   // image: cell id within the backend's position list
    Role role = Role::none;
    int slot = -1;
};

constexpr double kInactiveClassBias = -10.0;

} // namespace

std::vector<Cell> SyntheticBackendConfig::effective_positions() const {
    if (!positions.empty()) return positions;
    std::vector<Cell> cells;
    for (int r = 0; r < grid.rows; ++r)
        for (int c = 0; c < grid.cols; ++c) cells.push_back({r, c});
    return cells;
}

class SyntheticBackend : public Backend {
public:
    explicit SyntheticBackend(const SyntheticBackendConfig& cfg);

    std::string name() const override { return "synthetic"; }
    int num_layers() const override { return cfg_.layers; }
    int num_heads() const override { return cfg_.heads; }
    int hidden_width() const override { return cfg_.hidden; }
    Tokenizer& tokenizer() override { return tok_; }

    TokenLayout resolve_layout(const TaskInstance& instance) override;
    ForwardResult run_forward(const TaskInstance& instance, const CaptureSpec& capture,
                              const std::vector<EditSpec>& edits) override;
    ForwardResult generate(const TaskInstance& instance, int max_new_tokens,
                           const CaptureSpec& capture, const std::vector<EditSpec>& edits) override;

    // planted ground truth (SyntheticOracle surface)
    const SyntheticBackendConfig& config() const { return cfg_; }
    Vec position_embedding(const Cell& cell) const;
    Vec feature_embedding(const Conjunction& c) const {
        return color_dirs_[static_cast<int>(c.color)] + shape_dirs_[static_cast<int>(c.shape)];
    }

private:
    struct Step {
        std::vector<SeqToken> seq;
        int prompt_len = 0;
        int n_generated = 0;
    };

    int cell_id(const Cell& cell) const;
    int raster_rank(int cell_id) const { return cell_id; } // cells_ kept raster-sorted
    double omega(int cell_id) const {
        return cfg_.raster_bias * (static_cast<double>(cells_.size()) - raster_rank(cell_id));
    }

    std::vector<SeqToken> build_prompt_tokens(const TaskInstance& instance);
    void validate_instance(const TaskInstance& instance);
    TokenLayout layout_of(const std::vector<SeqToken>& seq) const;

    Vec embed(const SeqToken& tok, int position, int64_t trial) const;
    Vec gaussian(uint64_t key, double scale) const; // d-dim, scale/sqrt(d) per dim
    Vec stage_noise(int64_t trial, uint64_t tag, int position, double scale,
                    const Eigen::MatrixXd& projector) const;

    int answer_length(const TaskInstance& instance) const;
    Vec readout(const Vec& resid, int step, const TaskInstance& instance) const;

    ForwardResult forward_pass(const Step& step, const TaskInstance& instance,
                               const CaptureSpec& capture, const std::vector<EditSpec>& edits);

    void validate_edits(const std::vector<EditSpec>& edits, int seq_len) const;

    SyntheticBackendConfig cfg_;
    Tokenizer tok_;
    std::vector<Cell> cells_;
    int n_cells_ = 0;

    // allocated basis directions (columns of an orthogonal matrix)
    Eigen::MatrixXd basis_;
    Vec bos_dir_, bg_dir_, slot_dir_, qshape_dir_, u_dir_;
    std::vector<Vec> filler_dirs_;
    std::vector<Vec> color_dirs_, shape_dirs_;
    std::vector<Vec> p_vecs_, q_dirs_;
    Eigen::MatrixXd proj_f_, proj_pq_, proj_q_, proj_junk_;
    Vec pe_total_; // sum over cells of (P + Q)
    double claims_gain_ = 0.0;
    double grading_used_ = 0.0;

    friend struct vlmbind::SyntheticOracle;
};

SyntheticBackend::SyntheticBackend(const SyntheticBackendConfig& cfg)
    : cfg_(cfg), tok_(cfg.split_words) {
    const auto& s = cfg_.schedule;
    if (cfg_.layers < 4 || cfg_.heads < 1) {
        throw config_error("synthetic: needs at least 4 layers and 1 head");
    }
    if (!(0 <= s.condenser_layer && s.condenser_layer < s.matching_layer &&
          s.matching_layer < s.position_layer && s.position_layer < s.position_stage_end &&
          s.position_stage_end <= s.retrieval_layer && s.retrieval_layer < cfg_.layers)) {
        throw config_error("synthetic: stage schedule must be ordered "
                           "condenser < matching < position < position_stage_end <= retrieval");
    }
    for (int h : {s.condenser_head, s.matching_head, s.position_head, s.retrieval_head}) {
        if (h < 0 || h >= cfg_.heads) throw config_error("synthetic: planted head out of range");
    }
    if (s.position_layer == s.retrieval_layer && s.position_head == s.retrieval_head) {
        throw config_error("synthetic: position and retrieval heads must be distinct");
    }

    cells_ = cfg_.effective_positions();
    std::sort(cells_.begin(), cells_.end(), raster_less);
    for (size_t i = 1; i < cells_.size(); ++i) {
        if (cells_[i] == cells_[i - 1]) throw config_error("synthetic: duplicate grid position");
    }
    for (const auto& c : cells_) {
        if (c.row < 0 || c.row >= cfg_.grid.rows || c.col < 0 || c.col >= cfg_.grid.cols) {
            throw config_error("synthetic: position outside grid");
        }
    }
    n_cells_ = static_cast<int>(cells_.size());
    cfg_.positions = cells_;

    // subspace allocation
    const int n_filler = 8;
    const int n_junk_min = 4;
    int off = 0;
    const int off_bos = off++;
    const int off_bg = off++;
    const int off_slot = off++;
    const int off_qshape = off++;
    const int off_u = off++;
    const int off_filler = off;
    off += n_filler;
    const int off_color = off;
    off += kNumColors;
    const int off_shape = off;
    off += kNumShapes;
    const int off_p = off;
    off += n_cells_;
    const int off_q = off;
    off += n_cells_;
    const int off_junk = off;
    if (cfg_.hidden < off_junk + n_junk_min) {
        throw config_error("synthetic: hidden width " + std::to_string(cfg_.hidden) +
                           " is rank-deficient for the planted structure (needs >= " +
                           std::to_string(off_junk + n_junk_min) + ")");
    }
    const int d = cfg_.hidden;

    // orthonormal basis, optionally a seeded rotation
    if (cfg_.rotate_basis) {
        std::mt19937_64 rng(mix_seed(cfg_.seed, 0xba515ULL));
        std::normal_distribution<double> nd(0.0, 1.0);
        Eigen::MatrixXd g(d, d);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) g(i, j) = nd(rng);
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
        basis_ = qr.householderQ();
        Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int j = 0; j < d; ++j) {
            if (r(j, j) < 0) basis_.col(j) = -basis_.col(j);
        }
    } else {
        basis_ = Eigen::MatrixXd::Identity(d, d);
    }
    auto dir = [&](int idx) { return Vec(basis_.col(idx)); };

    bos_dir_ = dir(off_bos);
    bg_dir_ = dir(off_bg);
    slot_dir_ = dir(off_slot);
    qshape_dir_ = dir(off_qshape);
    u_dir_ = dir(off_u);
    for (int i = 0; i < n_filler; ++i) filler_dirs_.push_back(dir(off_filler + i));
    for (int i = 0; i < kNumColors; ++i) color_dirs_.push_back(dir(off_color + i));
    for (int i = 0; i < kNumShapes; ++i) shape_dirs_.push_back(dir(off_shape + i));
    for (int i = 0; i < n_cells_; ++i) q_dirs_.push_back(dir(off_q + i));

    // graded position family: Gram(i,j) = 1 - grading * D(i,j)/Dmax, embedded
    // in the P block; grading shrinks deterministically until the Gram is PSD
    double dmax = 0.0;
    for (int i = 0; i < n_cells_; ++i)
        for (int j = 0; j < n_cells_; ++j) dmax = std::max(dmax, cell_distance(cells_[i], cells_[j]));
    double grading = (n_cells_ > 1) ? cfg_.position_grading : 0.0;
    Eigen::MatrixXd coords;
    for (int attempt = 0;; ++attempt) {
        Eigen::MatrixXd gram(n_cells_, n_cells_);
        for (int i = 0; i < n_cells_; ++i) {
            for (int j = 0; j < n_cells_; ++j) {
                gram(i, j) = (i == j) ? 1.0
                                      : 1.0 - grading * cell_distance(cells_[i], cells_[j]) /
                                                  (dmax > 0 ? dmax : 1.0);
            }
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        if (es.eigenvalues().minCoeff() >= -1e-9) {
            Eigen::VectorXd lam = es.eigenvalues().cwiseMax(0.0);
            coords = es.eigenvectors() * lam.cwiseSqrt().asDiagonal();
            break;
        }
        grading *= 0.7;
        if (attempt > 32) throw config_error("synthetic: graded position Gram is not PSD");
    }
    grading_used_ = grading;
    for (int i = 0; i < n_cells_; ++i) {
        Vec p = Vec::Zero(d);
        for (int k = 0; k < n_cells_; ++k) p += coords(i, k) * dir(off_p + k);
        p_vecs_.push_back(std::move(p));
    }

    auto projector_for = [&](int begin, int count) {
        Eigen::MatrixXd b(d, count);
        for (int i = 0; i < count; ++i) b.col(i) = basis_.col(begin + i);
        return Eigen::MatrixXd(b * b.transpose());
    };
    proj_f_ = projector_for(off_color, kNumColors + kNumShapes);
    proj_pq_ = projector_for(off_p, 2 * n_cells_);
    proj_q_ = projector_for(off_q, n_cells_);
    proj_junk_ = projector_for(off_junk, d - off_junk);

    pe_total_ = Vec::Zero(d);
    for (int i = 0; i < n_cells_; ++i) pe_total_ += p_vecs_[i] + q_dirs_[i];

    claims_gain_ = cfg_.raster_bias * n_cells_ + 2.0;
}

int SyntheticBackend::cell_id(const Cell& cell) const {
    for (int i = 0; i < n_cells_; ++i)
        if (cells_[i] == cell) return i;
    throw usage_error("synthetic: scene uses a cell outside the backend's position list");
}

Vec SyntheticBackend::position_embedding(const Cell& cell) const {
    const int id = cell_id(cell);
    return p_vecs_[id] + q_dirs_[id] + omega(id) * u_dir_;
}

Vec SyntheticBackend::gaussian(uint64_t key, double scale) const {
    const int d = cfg_.hidden;
    Vec out(d);
    std::mt19937_64 rng(key);
    std::normal_distribution<double> nd(0.0, 1.0);
    const double s = scale / std::sqrt(static_cast<double>(d));
    for (int i = 0; i < d; ++i) out[i] = s * nd(rng);
    return out;
}

Vec SyntheticBackend::stage_noise(int64_t trial, uint64_t tag, int position, double scale,
                                  const Eigen::MatrixXd& projector) const {
    if (scale == 0.0) return Vec::Zero(cfg_.hidden);
    const Vec g = gaussian(mix_seed(cfg_.seed, static_cast<uint64_t>(trial), tag,
                                    static_cast<uint64_t>(position)),
                           scale * std::sqrt(static_cast<double>(cfg_.hidden)));
    // scale lives in the projected subspace, not spread over all dims
    return projector * (g / std::sqrt(static_cast<double>(projector.trace() > 0 ? projector.trace() : 1.0)));
}

void SyntheticBackend::validate_instance(const TaskInstance& instance) {
    const auto& scene = instance.scene;
    if (scene.grid != cfg_.grid) {
        throw usage_error("synthetic: scene grid does not match the backend configuration");
    }
    for (const auto& obj : scene.objects) cell_id(obj.cell);
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        for (size_t j = 0; j < i; ++j) {
            if (scene.objects[i].cell == scene.objects[j].cell) {
                throw invariant_violation("synthetic: two objects share a grid cell");
            }
        }
    }
    // the instance must carry the exact task template
    TaskInstance rebuilt = build_prompt_with_order(scene, instance.task_kind,
                                                   instance.caption_order);
    if (rebuilt.prompt_text != instance.prompt_text) {
        throw usage_error("synthetic: prompt does not match the task template");
    }
}

std::vector<SeqToken> SyntheticBackend::build_prompt_tokens(const TaskInstance& instance) {
    validate_instance(instance);
    const auto& scene = instance.scene;
    std::vector<SeqToken> seq;
    seq.push_back({SeqToken::Kind::bos, tok_.bos_id(), -1, -1, SeqToken::Role::none, -1});

    // image patches in raster order; each patch owned by at most one object
    const int hp = cfg_.grid.height_patches();
    const int wp = cfg_.grid.width_patches();
    std::vector<int> owner(static_cast<size_t>(hp) * wp, -1);
    for (size_t i = 0; i < scene.objects.size(); ++i) {
        const BBox bb = object_bbox(scene.grid, scene.objects[i].cell);
        for (int py = bb.y0 / kPatchPx; py < bb.y1 / kPatchPx; ++py) {
            for (int px = bb.x0 / kPatchPx; px < bb.x1 / kPatchPx; ++px) {
                owner[static_cast<size_t>(py) * wp + px] = static_cast<int>(i);
            }
        }
    }
    for (int p = 0; p < hp * wp; ++p) {
        SeqToken t;
        t.kind = SeqToken::Kind::image;
        t.object_index = owner[p];
        t.cell_index = owner[p] >= 0 ? cell_id(scene.objects[owner[p]].cell) : -1;
        seq.push_back(t);
    }

    auto push_word = [&](const std::string& word, SeqToken::Role role, int slot) {
        std::vector<std::string> parts = {word};
        if (tok_.is_split_word(word)) {
            parts.clear();
            // sub-token ids come from the tokenizer's split table
        }
        std::vector<int> ids = tok_.encode(word);
        for (size_t i = 0; i < ids.size(); ++i) {
            SeqToken t;
            t.kind = SeqToken::Kind::word;
            t.vocab_id = ids[i];
            // only the first sub-token carries the planted role
            t.role = (i == 0) ? role : SeqToken::Role::none;
            t.slot = (i == 0) ? slot : -1;
            seq.push_back(t);
        }
    };
    auto push_plain = [&](std::initializer_list<const char*> words) {
        for (const char* w : words) push_word(w, SeqToken::Role::none, -1);
    };

    switch (instance.task_kind) {
        case TaskKind::scene_description: {
            std::vector<int> order = instance.caption_order;
            if (order.empty()) {
                for (int i = 0; i < static_cast<int>(scene.objects.size()); ++i)
                    if (i != scene.target_index) order.push_back(i);
            }
            push_plain({"This", "is", "an", "image", "with", "a"});
            for (size_t i = 0; i < order.size(); ++i) {
                const auto& obj = scene.objects[order[i]];
                push_word(std::string(color_name(obj.color)), SeqToken::Role::cap_color,
                          static_cast<int>(i));
                push_word(std::string(shape_name(obj.shape)), SeqToken::Role::cap_shape,
                          static_cast<int>(i));
                if (order.size() == 1) {
                    push_plain({"and", "a"});
                } else if (i + 1 < order.size()) {
                    push_word(",", SeqToken::Role::cap_comma, static_cast<int>(i));
                    push_plain({"a"});
                } else {
                    push_word(",", SeqToken::Role::cap_comma, static_cast<int>(i));
                    push_plain({"and", "a"});
                }
            }
            break;
        }
        case TaskKind::color_retrieval: {
            push_plain({"In", "this", "image", ",", "the", "color", "of", "the"});
            push_word(std::string(shape_name(scene.target().shape)), SeqToken::Role::query_shape,
                      -1);
            push_plain({"is"});
            break;
        }
        case TaskKind::open_listing: {
            const char* count[] = {"zero", "one", "two", "three", "four", "five", "six"};
            push_plain({"The"});
            push_word(count[scene.objects.size()], SeqToken::Role::none, -1);
            push_plain({"objects", "present", "in", "this", "image", "are", "1.A"});
            break;
        }
    }
    return seq;
}

TokenLayout SyntheticBackend::layout_of(const std::vector<SeqToken>& seq) const {
    TokenLayout lay;
    lay.sequence_length = static_cast<int>(seq.size());
    lay.last_token = lay.sequence_length - 1;
    lay.image_tokens_begin = 1;

    std::map<int, std::vector<int>> spans; // object index -> token indices
    std::map<int, CaptionSlot> slots;
    for (int i = 0; i < static_cast<int>(seq.size()); ++i) {
        const auto& t = seq[i];
        if (t.kind == SeqToken::Kind::image) {
            ++lay.n_image_tokens;
            if (t.object_index >= 0) spans[t.object_index].push_back(i);
        } else if (t.kind == SeqToken::Kind::word) {
            if (lay.text_begin == 0) lay.text_begin = i;
            lay.text_token_ids.push_back(t.vocab_id);
            switch (t.role) {
                case SeqToken::Role::cap_color:
                    slots[t.slot].object_index = t.slot;
                    slots[t.slot].color.indices.push_back(i);
                    break;
                case SeqToken::Role::cap_shape:
                    slots[t.slot].shape.indices.push_back(i);
                    break;
                case SeqToken::Role::cap_comma:
                    slots[t.slot].comma = i;
                    lay.comma_tokens.push_back(i);
                    break;
                case SeqToken::Role::query_shape: {
                    if (!lay.query_shape) lay.query_shape = TokenSpan{};
                    lay.query_shape->indices.push_back(i);
                    break;
                }
                default:
                    break;
            }
            // multi-token words: remaining sub-tokens extend the span
            if (t.role == SeqToken::Role::none && i > 0) {
                const auto& prev = seq[i - 1];
                if (prev.kind == SeqToken::Kind::word) {
                    if (prev.role == SeqToken::Role::cap_color && slots.count(prev.slot) &&
                        tok_.word_of(t.vocab_id) != "," ) {
                        // handled below via span extension pass
                    }
                }
            }
        }
    }
    for (auto& [obj, span] : spans) {
        (void)obj;
        lay.image_token_spans.push_back(span);
    }
    for (auto& [slot, cs] : slots) {
        (void)slot;
        lay.caption_slots.push_back(cs);
    }
    return lay;
}

int SyntheticBackend::answer_length(const TaskInstance& instance) const {
    switch (instance.task_kind) {
        case TaskKind::scene_description: return 2;
        case TaskKind::color_retrieval: return 1;
        case TaskKind::open_listing:
            return 2 * static_cast<int>(instance.scene.objects.size());
    }
    return 1;
}

Vec SyntheticBackend::embed(const SeqToken& tok, int position, int64_t trial) const {
    Vec e = Vec::Zero(cfg_.hidden);
    switch (tok.kind) {
        case SeqToken::Kind::bos:
            e = bos_dir_;
            break;
        case SeqToken::Kind::image:
            if (tok.object_index >= 0) {
                e = p_vecs_[tok.cell_index] + q_dirs_[tok.cell_index] +
                    omega(tok.cell_index) * u_dir_;
            } else {
                e = bg_dir_;
            }
            break;
        case SeqToken::Kind::word: {
            const std::string& w = tok_.word_of(tok.vocab_id);
            for (int i = 0; i < kNumColors; ++i) {
                if (w == kColorNames[i]) {
                    e += color_dirs_[i];
                    break;
                }
            }
            for (int i = 0; i < kNumShapes; ++i) {
                if (w == kShapeNames[i]) {
                    e += shape_dirs_[i];
                    break;
                }
            }
            e += 0.3 * filler_dirs_[fnv1a(w) % filler_dirs_.size()];
            // slot anchors carry the anchor marker in their keys
            if (tok.role == SeqToken::Role::cap_color || tok.role == SeqToken::Role::cap_shape ||
                tok.role == SeqToken::Role::gen_shape) {
                e += slot_dir_;
            }
            if (tok.role == SeqToken::Role::query_shape) e += qshape_dir_;
            break;
        }
    }
    if (cfg_.sigma > 0.0) {
        e += gaussian(mix_seed(cfg_.seed, static_cast<uint64_t>(trial), 0xe4bedULL,
                               static_cast<uint64_t>(position)),
                      cfg_.sigma);
    }
    return e;
}

void SyntheticBackend::validate_edits(const std::vector<EditSpec>& edits, int seq_len) const {
    for (const auto& e : edits) {
        if (e.site == Site::attention_weights || e.site == Site::head_value_mix) {
            throw usage_error("synthetic: site is capture-only, cannot edit");
        }
        if (e.layer < 0 || e.layer >= cfg_.layers) {
            throw usage_error("synthetic: edit layer out of range");
        }
        if (e.site == Site::head_output) {
            if (!e.head || *e.head < 0 || *e.head >= cfg_.heads) {
                throw usage_error("synthetic: head_output edit needs a valid head index");
            }
        }
        if (e.positions.empty()) throw usage_error("synthetic: edit lists no positions");
        for (int p : e.positions) {
            if (p < 0 || p >= seq_len) throw usage_error("synthetic: edit position out of range");
        }
        if (e.payload.empty()) throw usage_error("synthetic: edit has no payload");
        if (e.payload.size() != 1 && e.payload.size() != e.positions.size()) {
            throw usage_error("synthetic: payload count must be 1 or match positions");
        }
        for (const auto& v : e.payload) {
            if (v.size() != cfg_.hidden) {
                throw usage_error("synthetic: payload width " + std::to_string(v.size()) +
                                  " does not match hidden width " + std::to_string(cfg_.hidden));
            }
        }
    }
}

ForwardResult SyntheticBackend::forward_pass(const Step& step, const TaskInstance& instance,
                                             const CaptureSpec& capture,
                                             const std::vector<EditSpec>& edits) {
    const auto& seq = step.seq;
    const int t_total = static_cast<int>(seq.size());
    const int d = cfg_.hidden;
    const int64_t trial = instance.scene.trial_id;
    const auto& sched = cfg_.schedule;
    validate_edits(edits, t_total);

    const bool honest_all = cfg_.sigma > 0.0 || !edits.empty();

    // anchor bookkeeping for the planted heads
    std::vector<int> claim_anchors; // cap_color/cap_shape/gen_shape positions
    std::vector<int> match_queries; // positions the matching head queries from
    int query_anchor = -1;
    int last = t_total - 1;
    for (int t = 0; t < t_total; ++t) {
        switch (seq[t].role) {
            case SeqToken::Role::cap_color:
            case SeqToken::Role::cap_shape:
            case SeqToken::Role::gen_shape:
                claim_anchors.push_back(t);
                match_queries.push_back(t);
                break;
            case SeqToken::Role::cap_comma:
                match_queries.push_back(t);
                break;
            case SeqToken::Role::query_shape:
                query_anchor = t;
                match_queries.push_back(t);
                break;
            default:
                break;
        }
    }

    const int m_objects = static_cast<int>(instance.scene.objects.size());
    const double beta = cfg_.attn_sharpness;

    std::vector<Vec> resid(t_total);
    for (int t = 0; t < t_total; ++t) resid[t] = embed(seq[t], t, trial);

    ForwardResult result;
    auto maybe_capture_token = [&](Site site, int layer, int t, const Vec& v) {
        if (capture.wants(site) && capture.wants_layer(layer) && capture.wants_position(t)) {
            result.trace.put({site, layer, -1, t}, v);
        }
    };

    for (int layer = 0; layer < cfg_.layers; ++layer) {
        std::vector<Vec> keys = resid;
        std::vector<Vec> values = resid;
        for (const auto& e : edits) {
            if (e.layer != layer) continue;
            auto* target = e.site == Site::key_proj ? &keys
                         : e.site == Site::value_proj ? &values
                                                      : nullptr;
            if (!target) continue;
            for (size_t i = 0; i < e.positions.size(); ++i) {
                Vec& slot = (*target)[e.positions[i]];
                slot = e.mode == EditSpec::Mode::replace ? e.payload_for(i)
                                                         : Vec(slot + e.payload_for(i));
            }
        }
        for (int t = 0; t < t_total; ++t) {
            maybe_capture_token(Site::key_proj, layer, t, keys[t]);
            maybe_capture_token(Site::value_proj, layer, t, values[t]);
        }

        Eigen::MatrixXd kmat(t_total, d);
        for (int t = 0; t < t_total; ++t) kmat.row(t) = keys[t].transpose();

        auto attn_mix = [&](const Vec& query, const Eigen::MatrixXd& selector, Vec& weights_out) {
            Vec scores = kmat * query;
            const double mx = scores.maxCoeff();
            Vec w = (scores.array() - mx).exp();
            w /= w.sum();
            weights_out = w;
            Vec mix = Vec::Zero(d);
            for (int t = 0; t < t_total; ++t) {
                if (w[t] != 0.0) mix += w[t] * (selector * values[t]);
            }
            return mix;
        };
        // role-wired local attention (positional wiring, uniform over sources)
        auto local_mix = [&](const std::vector<int>& sources, const Eigen::MatrixXd& selector,
                             Vec& weights_out) {
            Vec scores = Vec::Zero(t_total);
            for (int s : sources) scores[s] = beta;
            scores[0] = beta / 2; // BOS sink when no sources
            const double mx = scores.maxCoeff();
            Vec w = (scores.array() - mx).exp();
            w /= w.sum();
            weights_out = w;
            Vec mix = Vec::Zero(d);
            for (int t = 0; t < t_total; ++t) {
                if (w[t] != 0.0) mix += w[t] * (selector * values[t]);
            }
            return mix;
        };

        // shared sink computation (query = beta * bos_dir, junk selector)
        Vec sink_weights;
        Vec sink_mix;
        bool sink_ready = false;
        auto ensure_sink = [&]() {
            if (!sink_ready) {
                sink_mix = attn_mix(Vec(beta * bos_dir_), proj_junk_, sink_weights);
                sink_ready = true;
            }
        };

        std::vector<std::vector<std::pair<int, Vec>>> head_outputs(cfg_.heads);
        std::vector<std::vector<std::pair<int, Vec>>> head_mixes(cfg_.heads);
        std::vector<std::vector<std::pair<int, Vec>>> head_weights(cfg_.heads);

        for (int h = 0; h < cfg_.heads; ++h) {
            auto is_planted_query = [&](int t) -> int {
                // returns a planted role id, or 0 for sink behaviour
                if (layer == sched.condenser_layer && h == sched.condenser_head) {
                    const auto r = seq[t].role;
                    if (r == SeqToken::Role::cap_color || r == SeqToken::Role::cap_shape ||
                        r == SeqToken::Role::cap_comma || r == SeqToken::Role::gen_shape)
                        return 1;
                }
                if (layer == sched.matching_layer && h == sched.matching_head) {
                    for (int q : match_queries)
                        if (q == t) return 2;
                }
                if (layer == sched.position_layer && h == sched.position_head && t == last)
                    return 3;
                if (layer == sched.retrieval_layer && h == sched.retrieval_head && t == last)
                    return 4;
                return 0;
            };

            for (int t = 0; t < t_total; ++t) {
                const int role = is_planted_query(t);
                const bool want_attn = capture.wants(Site::attention_weights) &&
                                       capture.wants_layer(layer) && capture.wants_head(h) &&
                                       capture.wants_position(t);
                const bool want_out =
                    (capture.wants(Site::head_output) || capture.wants(Site::head_value_mix)) &&
                    capture.wants_layer(layer) && capture.wants_head(h) &&
                    capture.wants_position(t);
                bool edited_here = false;
                for (const auto& e : edits) {
                    if (e.site == Site::head_output && e.layer == layer && *e.head == h) {
                        for (int p : e.positions)
                            if (p == t) edited_here = true;
                    }
                }
                if (role == 0 && !honest_all && !want_attn && !want_out && !edited_here) {
                    continue; // sink output is exactly zero in the noise-free, edit-free regime
                }

                Vec weights;
                Vec mix;
                Vec out;
                switch (role) {
                    case 1: { // condenser: local feature transport within a slot / pair
                        std::vector<int> sources;
                        const auto r = seq[t].role;
                        if (r == SeqToken::Role::cap_color) {
                            // its shape word: scan forward to the slot's shape anchor
                            for (int u = t + 1; u < t_total; ++u) {
                                if (seq[u].role == SeqToken::Role::cap_shape &&
                                    seq[u].slot == seq[t].slot) {
                                    sources.push_back(u);
                                    break;
                                }
                            }
                        } else if (r == SeqToken::Role::cap_shape) {
                            for (int u = t - 1; u >= 0; --u) {
                                if (seq[u].role == SeqToken::Role::cap_color &&
                                    seq[u].slot == seq[t].slot) {
                                    sources.push_back(u);
                                    break;
                                }
                            }
                        } else if (r == SeqToken::Role::cap_comma) {
                            for (int u = 0; u < t_total; ++u) {
                                if ((seq[u].role == SeqToken::Role::cap_color ||
                                     seq[u].role == SeqToken::Role::cap_shape) &&
                                    seq[u].slot == seq[t].slot) {
                                    sources.push_back(u);
                                }
                            }
                        } else if (r == SeqToken::Role::gen_shape) {
                            if (t > 0 && seq[t - 1].role == SeqToken::Role::gen_color) {
                                sources.push_back(t - 1);
                            }
                        }
                        mix = local_mix(sources, proj_f_, weights);
                        out = static_cast<double>(std::max<size_t>(sources.size(), 1)) * mix;
                        break;
                    }
                    case 2: { // matching: own features -> image position code
                        const Vec q = beta * (proj_f_ * resid[t]);
                        mix = attn_mix(q, proj_pq_, weights);
                        out = mix;
                        if (cfg_.low_entropy_caption_noise > 0.0 &&
                            instance.scene.entropy == Entropy::low) {
                            out += stage_noise(trial, 0xcap0ULL, t,
                                               cfg_.low_entropy_caption_noise, proj_pq_);
                        }
                        break;
                    }
                    case 3: { // position head: claims -> target position code
                        const Vec q = beta * (slot_dir_ + 0.5 * bos_dir_);
                        mix = attn_mix(q, proj_pq_, weights);
                        if (instance.task_kind == TaskKind::color_retrieval) {
                            out = mix; // copy the queried object's code
                        } else {
                            out = pe_total_ - (m_objects - 1) * mix;
                        }
                        if (cfg_.low_entropy_last_noise > 0.0 &&
                            instance.scene.entropy == Entropy::low) {
                            out += stage_noise(trial, 0x1a57ULL, t, cfg_.low_entropy_last_noise,
                                               proj_pq_);
                        }
                        break;
                    }
                    case 4: { // retrieval head: position code -> object features
                        const Vec q = beta * (claims_gain_ * (proj_q_ * resid[t]) + u_dir_);
                        mix = attn_mix(q, proj_f_, weights);
                        out = mix;
                        break;
                    }
                    default: {
                        if (honest_all || want_attn || want_out || edited_here) {
                            ensure_sink();
                            weights = sink_weights;
                            mix = sink_mix;
                            out = mix;
                        }
                        break;
                    }
                }

                for (const auto& e : edits) {
                    if (e.site != Site::head_output || e.layer != layer || *e.head != h) continue;
                    for (size_t i = 0; i < e.positions.size(); ++i) {
                        if (e.positions[i] != t) continue;
                        out = e.mode == EditSpec::Mode::replace ? e.payload_for(i)
                                                                : Vec(out + e.payload_for(i));
                    }
                }

                if (want_attn) head_weights[h].push_back({t, weights});
                if (capture.wants(Site::head_value_mix) && capture.wants_layer(layer) &&
                    capture.wants_head(h) && capture.wants_position(t)) {
                    head_mixes[h].push_back({t, mix});
                }
                if (capture.wants(Site::head_output) && capture.wants_layer(layer) &&
                    capture.wants_head(h) && capture.wants_position(t)) {
                    head_outputs[h].push_back({t, out});
                }
                if (out.size() != 0) resid[t] += out;
            }
        }

        for (int h = 0; h < cfg_.heads; ++h) {
            for (auto& [t, w] : head_weights[h])
                result.trace.put({Site::attention_weights, layer, h, t}, std::move(w));
            for (auto& [t, m] : head_mixes[h])
                result.trace.put({Site::head_value_mix, layer, h, t}, std::move(m));
            for (auto& [t, o] : head_outputs[h])
                result.trace.put({Site::head_output, layer, h, t}, std::move(o));
        }

        // stage projections at the decision token
        if (layer >= sched.position_layer && layer < sched.position_stage_end) {
            resid[last] = proj_pq_ * resid[last];
        } else if (layer >= sched.retrieval_layer) {
            resid[last] = proj_f_ * resid[last];
        }

        for (const auto& e : edits) {
            if (e.site != Site::residual || e.layer != layer) continue;
            for (size_t i = 0; i < e.positions.size(); ++i) {
                Vec& slot = resid[e.positions[i]];
                slot = e.mode == EditSpec::Mode::replace ? e.payload_for(i)
                                                         : Vec(slot + e.payload_for(i));
            }
        }
        for (int t = 0; t < t_total; ++t) maybe_capture_token(Site::residual, layer, t, resid[t]);
    }

    result.logits = readout(resid[last], step.n_generated, instance);
    if (!result.logits.allFinite()) {
        throw invariant_violation("synthetic: non-finite logits");
    }
    return result;
}

Vec SyntheticBackend::readout(const Vec& resid, int step, const TaskInstance& instance) const {
    const int vocab = tok_.vocab_size();
    Vec logits = Vec::Constant(vocab, kInactiveClassBias);
    const int ans_len = answer_length(instance);

    enum class Cls { color, shape, eos, other };
    Cls expected = Cls::eos;
    if (step < ans_len) expected = (step % 2 == 0) ? Cls::color : Cls::shape;

    for (int id = 0; id < vocab; ++id) {
        const std::string& w = tok_.word_of(id);
        Cls cls = Cls::other;
        double proj = 0.0;
        for (int i = 0; i < kNumColors; ++i) {
            if (w == kColorNames[i]) {
                cls = Cls::color;
                proj = color_dirs_[i].dot(resid);
                break;
            }
        }
        if (cls == Cls::other) {
            for (int i = 0; i < kNumShapes; ++i) {
                if (w == kShapeNames[i]) {
                    cls = Cls::shape;
                    proj = shape_dirs_[i].dot(resid);
                    break;
                }
            }
        }
        if (id == tok_.eos_id()) cls = Cls::eos;
        const double bias = (cls == expected) ? 0.0 : kInactiveClassBias;
        logits[id] = proj + bias;
    }
    return logits;
}

TokenLayout SyntheticBackend::resolve_layout(const TaskInstance& instance) {
    const auto seq = build_prompt_tokens(instance);
    // cross-check the text region against a direct prompt tokenization
    const auto direct = tok_.encode(instance.prompt_text);
    TokenLayout lay = layout_of(seq);
    if (direct != lay.text_token_ids) {
        throw usage_error("synthetic: prompt/text alignment failed");
    }
    return lay;
}

ForwardResult SyntheticBackend::run_forward(const TaskInstance& instance,
                                            const CaptureSpec& capture,
                                            const std::vector<EditSpec>& edits) {
    Step step;
    step.seq = build_prompt_tokens(instance);
    step.prompt_len = static_cast<int>(step.seq.size());
    step.n_generated = 0;
    return forward_pass(step, instance, capture, edits);
}

ForwardResult SyntheticBackend::generate(const TaskInstance& instance, int max_new_tokens,
                                         const CaptureSpec& capture,
                                         const std::vector<EditSpec>& edits) {
    Step step;
    step.seq = build_prompt_tokens(instance);
    step.prompt_len = static_cast<int>(step.seq.size());
    step.n_generated = 0;

    ForwardResult out;
    for (int i = 0; i < max_new_tokens; ++i) {
        // captures reflect the first step only; edits apply to every step
        ForwardResult r = forward_pass(step, instance, i == 0 ? capture : CaptureSpec::none(),
                                       edits);
        if (i == 0) {
            out.logits = r.logits;
            out.trace = std::move(r.trace);
        }
        int best = 0;
        r.logits.maxCoeff(&best);
        if (best == tok_.eos_id()) break;
        out.generated_ids.push_back(best);

        SeqToken t;
        t.kind = SeqToken::Kind::word;
        t.vocab_id = best;
        const std::string& w = tok_.word_of(best);
        bool is_shape = false;
        for (auto n : kShapeNames) {
            if (w == n) is_shape = true;
        }
        bool is_color = false;
        for (auto n : kColorNames) {
            if (w == n) is_color = true;
        }
        if (is_color) {
            t.role = SeqToken::Role::gen_color;
            t.slot = step.n_generated / 2;
        } else if (is_shape) {
            t.role = SeqToken::Role::gen_shape;
            t.slot = step.n_generated / 2;
        }
        step.seq.push_back(t);
        step.n_generated += 1;
    }
    out.generated_text = tok_.decode(out.generated_ids);
    return out;
}

std::unique_ptr<Backend> make_synthetic_backend(const SyntheticBackendConfig& config) {
    return std::make_unique<SyntheticBackend>(config);
}

SyntheticOracle::SyntheticOracle(Backend& backend)
    : impl_(dynamic_cast<const SyntheticBackend*>(&backend)) {
    if (!impl_) throw usage_error("synthetic: oracle requires a synthetic backend");
}

Vec SyntheticOracle::position_embedding(const Cell& cell) const {
    return impl_->position_embedding(cell);
}
Vec SyntheticOracle::feature_embedding(const Conjunction& c) const {
    return impl_->feature_embedding(c);
}
std::pair<int, int> SyntheticOracle::position_id_head() const {
    return {impl_->config().schedule.position_layer, impl_->config().schedule.position_head};
}
std::pair<int, int> SyntheticOracle::feature_retrieval_head() const {
    return {impl_->config().schedule.retrieval_layer, impl_->config().schedule.retrieval_head};
}
std::pair<int, int> SyntheticOracle::semantic_matching_head() const {
    return {impl_->config().schedule.matching_layer, impl_->config().schedule.matching_head};
}
std::vector<int> SyntheticOracle::position_stage_layers() const {
    std::vector<int> out;
    for (int l = impl_->config().schedule.position_layer;
         l < impl_->config().schedule.position_stage_end; ++l)
        out.push_back(l);
    return out;
}
std::vector<int> SyntheticOracle::feature_stage_layers() const {
    std::vector<int> out;
    for (int l = impl_->config().schedule.retrieval_layer; l < impl_->config().layers; ++l)
        out.push_back(l);
    return out;
}
int SyntheticOracle::repair_layer() const {
    return impl_->config().schedule.position_stage_end - 1;
}

SyntheticBackendConfig synthetic_config_from_kv(const KvConfig& kv, const GridSpec& grid,
                                                const std::vector<Cell>& positions) {
    SyntheticBackendConfig cfg;
    cfg.grid = grid;
    cfg.positions = positions;
    cfg.layers = static_cast<int>(kv.get_int_or("synthetic.layers", cfg.layers));
    cfg.heads = static_cast<int>(kv.get_int_or("synthetic.heads", cfg.heads));
    cfg.hidden = static_cast<int>(kv.get_int_or("synthetic.hidden", cfg.hidden));
    cfg.sigma = kv.get_double_or("synthetic.sigma", cfg.sigma);
    cfg.low_entropy_caption_noise =
        kv.get_double_or("synthetic.low_entropy_caption_noise", cfg.low_entropy_caption_noise);
    cfg.low_entropy_last_noise =
        kv.get_double_or("synthetic.low_entropy_last_noise", cfg.low_entropy_last_noise);
    cfg.attn_sharpness = kv.get_double_or("synthetic.attn_sharpness", cfg.attn_sharpness);
    cfg.raster_bias = kv.get_double_or("synthetic.raster_bias", cfg.raster_bias);
    cfg.position_grading = kv.get_double_or("synthetic.position_grading", cfg.position_grading);
    cfg.rotate_basis = kv.get_bool_or("synthetic.rotate_basis", cfg.rotate_basis);
    cfg.seed = static_cast<uint64_t>(kv.get_int_or("seed", 0));
    return cfg;
}

void register_synthetic_backend_family() {
    register_backend("synthetic", [](const KvConfig& kv) -> std::unique_ptr<Backend> {
        GridSpec grid{static_cast<int>(kv.get_int_or("grid.rows", 2)),
                      static_cast<int>(kv.get_int_or("grid.cols", 2))};
        return make_synthetic_backend(synthetic_config_from_kv(kv, grid, {}));
    });
}

} // namespace vlmbind
