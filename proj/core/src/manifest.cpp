#include "vlmbind/manifest.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vlmbind/errors.hpp"
#include "vlmbind/sha256.hpp"

namespace vlmbind {

void ensure_directory(const std::string& path) {
    std::error_code ec;
    std::filesystem::create_directories(path, ec);
    if (ec) throw config_error("manifest: cannot create directory '" + path + "': " + ec.message());
}

ManifestWriter::ManifestWriter(std::string out_dir) : out_dir_(std::move(out_dir)) {
    ensure_directory(out_dir_);
}

void ManifestWriter::add_file(const std::string& relative_path) {
    const std::string full = out_dir_ + "/" + relative_path;
    hashes_[relative_path] = Sha256::of_file(full);
}

void ManifestWriter::set_meta(const std::string& key, const std::string& value) {
    meta_[key] = value;
}

std::string ManifestWriter::finalize() {
    nlohmann::json j;
    for (const auto& [k, v] : meta_) j["meta"][k] = v;
    auto& files = j["files"] = nlohmann::json::array();
    for (const auto& [path, sha] : hashes_) {
        files.push_back({{"path", path}, {"sha256", sha}});
    }
    const std::string full = out_dir_ + "/manifest.json";
    std::ofstream f(full);
    if (!f) throw config_error("manifest: cannot write '" + full + "'");
    f << j.dump(2) << "\n";
    return full;
}

} // namespace vlmbind
