#include "vlmbind/tensor_store.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "vlmbind/errors.hpp"

namespace vlmbind {

namespace {
constexpr char kMagic[8] = {'N', 'T', 'C', 'O', 'N', 'T', '0', '1'};
}

void write_tensor_container(const std::string& stem_path, const std::vector<NamedTensor>& tensors) {
    std::ofstream bin(stem_path + ".nt", std::ios::binary);
    if (!bin) throw config_error("tensor_store: cannot open '" + stem_path + ".nt'");
    bin.write(kMagic, sizeof(kMagic));

    nlohmann::json sidecar;
    sidecar["container"] = "ntcont01";
    auto& list = sidecar["tensors"] = nlohmann::json::array();

    uint64_t offset = sizeof(kMagic);
    for (const auto& t : tensors) {
        if (t.element_count() != static_cast<int64_t>(t.data.size())) {
            throw usage_error("tensor_store: shape/data mismatch for '" + t.name + "'");
        }
        nlohmann::json meta;
        meta["name"] = t.name;
        meta["dtype"] = "f64";
        meta["shape"] = t.shape;
        meta["offset_bytes"] = offset;
        meta["size_bytes"] = t.data.size() * sizeof(double);
        if (t.site) meta["site"] = *t.site;
        if (t.layer) meta["layer"] = *t.layer;
        if (t.head) meta["head"] = *t.head;
        if (t.positions) meta["positions"] = *t.positions;
        if (t.trial_id) meta["trial_id"] = *t.trial_id;
        list.push_back(std::move(meta));

        bin.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        offset += t.data.size() * sizeof(double);
    }
    if (!bin) throw config_error("tensor_store: short write to '" + stem_path + ".nt'");
    bin.close();

    std::ofstream js(stem_path + ".nt.json");
    if (!js) throw config_error("tensor_store: cannot open '" + stem_path + ".nt.json'");
    js << sidecar.dump(2) << "\n";
}

std::vector<NamedTensor> read_tensor_container(const std::string& stem_path) {
    std::ifstream js(stem_path + ".nt.json");
    if (!js) throw config_error("tensor_store: missing sidecar '" + stem_path + ".nt.json'");
    nlohmann::json sidecar;
    js >> sidecar;

    std::ifstream bin(stem_path + ".nt", std::ios::binary);
    if (!bin) throw config_error("tensor_store: missing container '" + stem_path + ".nt'");
    char magic[8];
    bin.read(magic, sizeof(magic));
    if (bin.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
        throw config_error("tensor_store: bad container magic in '" + stem_path + ".nt'");
    }

    std::vector<NamedTensor> out;
    for (const auto& meta : sidecar.at("tensors")) {
        NamedTensor t;
        t.name = meta.at("name").get<std::string>();
        if (meta.at("dtype").get<std::string>() != "f64") {
            throw config_error("tensor_store: unsupported dtype for '" + t.name + "'");
        }
        t.shape = meta.at("shape").get<std::vector<int64_t>>();
        if (meta.contains("site")) t.site = meta["site"].get<std::string>();
        if (meta.contains("layer")) t.layer = meta["layer"].get<int>();
        if (meta.contains("head")) t.head = meta["head"].get<int>();
        if (meta.contains("positions")) t.positions = meta["positions"].get<std::vector<int>>();
        if (meta.contains("trial_id")) t.trial_id = meta["trial_id"].get<int64_t>();

        const uint64_t off = meta.at("offset_bytes").get<uint64_t>();
        t.data.resize(static_cast<size_t>(t.element_count()));
        bin.seekg(static_cast<std::streamoff>(off));
        bin.read(reinterpret_cast<char*>(t.data.data()),
                 static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        if (static_cast<size_t>(bin.gcount()) != t.data.size() * sizeof(double)) {
            throw config_error("tensor_store: truncated payload for '" + t.name + "'");
        }
        out.push_back(std::move(t));
    }
    return out;
}

} // namespace vlmbind
