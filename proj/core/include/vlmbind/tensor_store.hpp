#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vlmbind {

// A named float64 tensor plus the capture metadata the sidecar records.
struct NamedTensor {
    std::string name;
    std::vector<int64_t> shape;
    std::vector<double> data;

    // capture metadata (optional; serialized when present)
    std::optional<std::string> site;
    std::optional<int> layer;
    std::optional<int> head;
    std::optional<std::vector<int>> positions;
    std::optional<int64_t> trial_id;

    int64_t element_count() const {
        int64_t n = 1;
        for (auto d : shape) n *= d;
        return n;
    }
};

// Single-file container of named tensors: raw little-endian f64 payloads
// in `<stem>.nt`, per-tensor metadata (name, dtype, shape, byte offset,
// capture fields) in the `<stem>.nt.json` sidecar.
void write_tensor_container(const std::string& stem_path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_container(const std::string& stem_path);

} // namespace vlmbind
