#pragma once

#include <map>
#include <string>
#include <vector>

namespace vlmbind {

// Records every artifact an experiment emits; written as manifest.json in
// the output directory. Re-running a deterministic experiment must produce
// identical content hashes.
class ManifestWriter {
public:
    explicit ManifestWriter(std::string out_dir);

    const std::string& out_dir() const { return out_dir_; }

    // Register a file that was just written under out_dir (relative path).
    void add_file(const std::string& relative_path);
    void set_meta(const std::string& key, const std::string& value);

    // Writes manifest.json (sorted entries, stable content).
    std::string finalize();

    const std::map<std::string, std::string>& entries() const { return hashes_; }

private:
    std::string out_dir_;
    std::map<std::string, std::string> hashes_; // rel path -> sha256
    std::map<std::string, std::string> meta_;
};

// Creates the directory (and parents) if needed.
void ensure_directory(const std::string& path);

} // namespace vlmbind
