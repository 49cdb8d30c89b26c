#include "vlmbind/backend.hpp"

#include <algorithm>
#include <sstream>

#include "vlmbind/errors.hpp"

namespace vlmbind {

const char* site_name(Site s) {
    switch (s) {
        case Site::residual: return "residual";
        case Site::head_output: return "head_output";
        case Site::head_value_mix: return "head_value_mix";
        case Site::attention_weights: return "attention_weights";
        case Site::key_proj: return "key_proj";
        case Site::value_proj: return "value_proj";
    }
    return "?";
}

Site site_from_name(const std::string& name) {
    for (Site s : {Site::residual, Site::head_output, Site::head_value_mix,
                   Site::attention_weights, Site::key_proj, Site::value_proj}) {
        if (name == site_name(s)) return s;
    }
    throw usage_error("backend: unknown site '" + name + "'");
}

bool CaptureSpec::wants_layer(int l) const {
    return layers.empty() || std::find(layers.begin(), layers.end(), l) != layers.end();
}
bool CaptureSpec::wants_position(int p) const {
    return positions.empty() || std::find(positions.begin(), positions.end(), p) != positions.end();
}
bool CaptureSpec::wants_head(int h) const {
    return heads.empty() || std::find(heads.begin(), heads.end(), h) != heads.end();
}

const Vec& ActivationTrace::at(const TraceKey& key) const {
    auto it = data_.find(key);
    if (it == data_.end()) {
        std::ostringstream os;
        os << "backend: trace is missing (" << site_name(key.site) << ", layer " << key.layer
           << ", head " << key.head << ", position " << key.position << ")";
        throw usage_error(os.str());
    }
    return it->second;
}

const Vec* ActivationTrace::find(const TraceKey& key) const {
    auto it = data_.find(key);
    return it == data_.end() ? nullptr : &it->second;
}

std::vector<NamedTensor> ActivationTrace::to_tensors(int64_t trial_id) const {
    std::vector<NamedTensor> out;
    out.reserve(data_.size());
    for (const auto& [key, vec] : data_) {
        NamedTensor t;
        std::ostringstream name;
        name << site_name(key.site) << "_l" << key.layer;
        if (key.head >= 0) name << "_h" << key.head;
        name << "_p" << key.position << "_t" << trial_id;
        t.name = name.str();
        t.shape = {vec.size()};
        t.data.assign(vec.data(), vec.data() + vec.size());
        t.site = site_name(key.site);
        t.layer = key.layer;
        if (key.head >= 0) t.head = key.head;
        t.positions = std::vector<int>{key.position};
        t.trial_id = trial_id;
        out.push_back(std::move(t));
    }
    return out;
}

int Backend::answer_token_id(const TaskInstance& instance) {
    std::istringstream in(instance.answer_tokens);
    std::string first;
    if (!(in >> first)) throw usage_error("backend: instance has no answer tokens");
    // multi-token answer words score their first sub-token
    auto ids = tokenizer().encode(first);
    if (ids.empty()) throw usage_error("backend: answer tokenizes to nothing");
    return ids.front();
}

namespace {
std::map<std::string, BackendFactory>& registry() {
    static std::map<std::string, BackendFactory> r;
    return r;
}
} // namespace

void register_backend(const std::string& family, BackendFactory factory) {
    registry()[family] = std::move(factory);
}

std::unique_ptr<Backend> make_backend(const std::string& family, const KvConfig& config) {
    auto it = registry().find(family);
    if (it == registry().end()) {
        throw adapter_error("backend: no adapter registered for model family '" + family + "'");
    }
    return it->second(config);
}

std::vector<std::string> registered_backends() {
    std::vector<std::string> names;
    for (const auto& [k, v] : registry()) names.push_back(k);
    return names;
}

std::vector<ConformanceResult> run_conformance(Backend& backend, const TaskInstance& instance) {
    std::vector<ConformanceResult> results;
    auto check = [&](const std::string& name, bool ok, const std::string& detail = "") {
        results.push_back({name, ok, detail});
    };

    const TokenLayout layout = backend.resolve_layout(instance);

    // layout shape contract
    {
        bool spans_ok = !layout.image_token_spans.empty();
        for (const auto& span : layout.image_token_spans) {
            if (static_cast<int>(span.size()) != kObjectPatches * kObjectPatches) spans_ok = false;
        }
        std::set<int> seen;
        bool disjoint = true;
        for (const auto& span : layout.image_token_spans) {
            for (int i : span) {
                if (!seen.insert(i).second) disjoint = false;
            }
        }
        bool last_ok = layout.last_token == layout.sequence_length - 1;
        check("layout_object_spans_of_4", spans_ok);
        check("layout_spans_disjoint", disjoint);
        check("layout_last_token_maximal", last_ok);
    }

    // determinism
    const auto r1 = backend.run_forward(instance, CaptureSpec::none(), {});
    const auto r2 = backend.run_forward(instance, CaptureSpec::none(), {});
    check("forward_deterministic", r1.logits == r2.logits);

    // capture purity
    CaptureSpec all_resid;
    all_resid.sites = {Site::residual, Site::key_proj, Site::value_proj, Site::head_output,
                       Site::attention_weights};
    const auto r3 = backend.run_forward(instance, all_resid, {});
    check("capture_non_perturbing", r3.logits == r1.logits);

    // edit locality: an add-edit at the middle layer leaves earlier captures unchanged
    const int mid = backend.num_layers() / 2;
    {
        CaptureSpec early;
        early.sites = {Site::residual};
        for (int l = 0; l < mid; ++l) early.layers.push_back(l);
        early.positions = {layout.last_token};

        EditSpec edit;
        edit.site = Site::residual;
        edit.layer = mid;
        edit.positions = {layout.last_token};
        edit.mode = EditSpec::Mode::add;
        edit.payload = {Vec::Ones(backend.hidden_width())};

        const auto base = backend.run_forward(instance, early, {});
        const auto edited = backend.run_forward(instance, early, {edit});
        bool local = true;
        for (const auto& [key, vec] : base.trace.all()) {
            const Vec* other = edited.trace.find(key);
            if (!other || *other != vec) local = false;
        }
        check("edit_locality", local);
    }

    // additive algebra: add(v) then add(-v) at the same site reproduces logits
    {
        Vec v = Vec::Zero(backend.hidden_width());
        for (int i = 0; i < v.size(); ++i) v[i] = std::sin(0.7 * i) * 0.3;
        EditSpec plus;
        plus.site = Site::residual;
        plus.layer = mid;
        plus.positions = {layout.last_token};
        plus.mode = EditSpec::Mode::add;
        plus.payload = {v};
        EditSpec minus = plus;
        minus.payload = {Vec(-v)};
        const auto both = backend.run_forward(instance, CaptureSpec::none(), {plus, minus});
        const double diff = (both.logits - r1.logits).cwiseAbs().maxCoeff();
        check("additive_edit_algebra", diff < 1e-5, "max logit diff " + std::to_string(diff));
    }

    // replace semantics: replacing the last-layer residual with its clean
    // value reproduces the clean logits
    {
        const int last_layer = backend.num_layers() - 1;
        CaptureSpec cap;
        cap.sites = {Site::residual};
        cap.layers = {last_layer};
        cap.positions = {layout.last_token};
        const auto clean = backend.run_forward(instance, cap, {});
        EditSpec rep;
        rep.site = Site::residual;
        rep.layer = last_layer;
        rep.positions = {layout.last_token};
        rep.mode = EditSpec::Mode::replace;
        rep.payload = {clean.trace.at({Site::residual, last_layer, -1, layout.last_token})};
        const auto replayed = backend.run_forward(instance, CaptureSpec::none(), {rep});
        const double diff = (replayed.logits - clean.logits).cwiseAbs().maxCoeff();
        check("replace_with_clean_is_noop", diff < 1e-9, "max logit diff " + std::to_string(diff));
    }

    return results;
}

} // namespace vlmbind
