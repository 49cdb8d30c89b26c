#pragma once

#include <Eigen/Dense>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vlmbind/kvconfig.hpp"
#include "vlmbind/scene.hpp"
#include "vlmbind/tensor_store.hpp"
#include "vlmbind/tokens.hpp"

namespace vlmbind {

using Vec = Eigen::VectorXd;

enum class Site : uint8_t {
    residual,          // post-layer residual stream, per token
    head_output,       // per-head contribution after the output projection
    head_value_mix,    // per-head attended value mix before the output projection
    attention_weights, // post-softmax weights, per head and query token
    key_proj,          // per-token key projection (shared across heads)
    value_proj,        // per-token value projection (shared across heads)
};

const char* site_name(Site s);
Site site_from_name(const std::string& name);

struct CaptureSpec {
    std::set<Site> sites;
    std::vector<int> layers;    // empty = all layers
    std::vector<int> positions; // empty = all token positions
    std::vector<int> heads;     // empty = all heads

    bool wants(Site s) const { return sites.count(s) != 0; }
    bool wants_layer(int l) const;
    bool wants_position(int p) const;
    bool wants_head(int h) const;

    static CaptureSpec none() { return {}; }
};

struct EditSpec {
    enum class Mode : uint8_t { replace, add };

    Site site = Site::residual;
    int layer = 0;
    std::optional<int> head; // required for head_output edits
    std::vector<int> positions;
    Mode mode = Mode::replace;
    // one payload vector per position, or a single broadcast vector
    std::vector<Vec> payload;

    const Vec& payload_for(size_t position_slot) const {
        return payload.size() == 1 ? payload[0] : payload.at(position_slot);
    }
};

struct TraceKey {
    Site site{};
    int layer = 0;
    int head = -1; // -1 for per-token (non-head) sites
    int position = 0;
    auto operator<=>(const TraceKey&) const = default;
};

class ActivationTrace {
public:
    void put(const TraceKey& key, Vec value) { data_[key] = std::move(value); }
    const Vec& at(const TraceKey& key) const;
    const Vec* find(const TraceKey& key) const;
    bool empty() const { return data_.empty(); }
    size_t size() const { return data_.size(); }
    const std::map<TraceKey, Vec>& all() const { return data_; }

    // flatten to named tensors for the container format
    std::vector<NamedTensor> to_tensors(int64_t trial_id) const;

private:
    std::map<TraceKey, Vec> data_;
};

struct ForwardResult {
    Vec logits; // vocabulary scores at the last position
    ActivationTrace trace;
    std::vector<int> generated_ids; // greedy continuation (generate() only)
    std::string generated_text;
};

// Uniform forward-pass protocol with activation capture and in-flight
// edits. A handle serves one forward pass at a time; results and traces
// are immutable snapshots.
class Backend {
public:
    virtual ~Backend() = default;

    virtual std::string name() const = 0;
    virtual int num_layers() const = 0;
    virtual int num_heads() const = 0;
    virtual int hidden_width() const = 0;
    virtual Tokenizer& tokenizer() = 0;

    virtual TokenLayout resolve_layout(const TaskInstance& instance) = 0;

    virtual ForwardResult run_forward(const TaskInstance& instance, const CaptureSpec& capture,
                                      const std::vector<EditSpec>& edits) = 0;

    // greedy decode; edits and capture apply to every step (positions refer
    // to the prompt sequence)
    virtual ForwardResult generate(const TaskInstance& instance, int max_new_tokens,
                                   const CaptureSpec& capture,
                                   const std::vector<EditSpec>& edits) = 0;

    // first answer token id for scoring / Eq.-style logit lookups
    int answer_token_id(const TaskInstance& instance);
};

// Adapter registry, keyed by model-family string.
using BackendFactory = std::function<std::unique_ptr<Backend>(const KvConfig&)>;
void register_backend(const std::string& family, BackendFactory factory);
std::unique_ptr<Backend> make_backend(const std::string& family, const KvConfig& config);
std::vector<std::string> registered_backends();

// Protocol conformance suite: every adapter must pass the same checks the
// synthetic backend passes (layout shape, determinism, capture purity,
// edit locality, additive edit algebra, replace semantics).
struct ConformanceResult {
    std::string check;
    bool passed = false;
    std::string detail;
};
std::vector<ConformanceResult> run_conformance(Backend& backend, const TaskInstance& instance);

} // namespace vlmbind
