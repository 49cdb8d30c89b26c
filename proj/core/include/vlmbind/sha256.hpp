#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace vlmbind {

// Streaming SHA-256, used for artifact manifests.
class Sha256 {
public:
    Sha256();
    void update(const void* data, size_t len);
    std::string hex_digest(); // finalizes

    static std::string of_bytes(const void* data, size_t len);
    static std::string of_file(const std::string& path);

private:
    void process_block(const uint8_t* block);
    uint32_t state_[8];
    uint64_t bit_len_ = 0;
    uint8_t buffer_[64];
    size_t buffer_len_ = 0;
};

} // namespace vlmbind
