#pragma once

#include <string>
#include <vector>

#include "vlmbind/image.hpp"

namespace vlmbind {

// Minimal deterministic PNG encoder (8-bit RGB, zlib-compressed, filter 0).
std::vector<uint8_t> encode_png(const Image& img);

void write_png(const std::string& path, const Image& img);

} // namespace vlmbind
