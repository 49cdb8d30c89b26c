#include "vlmbind/tokens.hpp"

#include <sstream>

#include "vlmbind/errors.hpp"

namespace vlmbind {

Tokenizer::Tokenizer(std::map<std::string, std::vector<std::string>> split_words)
    : split_(std::move(split_words)) {
    id_of("<bos>");
    id_of("<eos>");
    // canonical template vocabulary; order fixes the ids
    for (const char* w :
         {"This", "is", "an", "image", "with", "a", ",", "and", "In", "this", "the", "color",
          "of", "The", "objects", "present", "in", "are", "1.A", "one", "two", "three", "four",
          "five", "six"}) {
        id_of(w);
    }
    for (auto name : kColorNames) id_of(std::string(name));
    for (auto name : kShapeNames) id_of(std::string(name));
}

int Tokenizer::id_of(const std::string& word) {
    auto it = index_.find(word);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(words_.size());
    words_.push_back(word);
    index_[word] = id;
    return id;
}

std::optional<int> Tokenizer::lookup(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

const std::string& Tokenizer::word_of(int id) const {
    if (id < 0 || id >= static_cast<int>(words_.size())) {
        throw usage_error("tokenizer: id out of range");
    }
    return words_[static_cast<size_t>(id)];
}

int Tokenizer::expansion_of(const std::string& word) const {
    auto it = split_.find(word);
    return it == split_.end() ? 1 : static_cast<int>(it->second.size());
}

std::vector<int> Tokenizer::encode(const std::string& text) {
    std::vector<int> out;
    std::istringstream in(text);
    std::string piece;
    while (in >> piece) {
        std::vector<std::string> atoms;
        while (!piece.empty() && piece.back() == ',') {
            piece.pop_back();
            atoms.insert(atoms.begin(), ",");
        }
        if (!piece.empty()) atoms.insert(atoms.begin(), piece);
        for (const auto& atom : atoms) {
            auto it = split_.find(atom);
            if (it != split_.end()) {
                for (const auto& part : it->second) out.push_back(id_of(part));
            } else {
                out.push_back(id_of(atom));
            }
        }
    }
    return out;
}

std::string Tokenizer::decode(const std::vector<int>& ids) const {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += " ";
        out += word_of(ids[i]);
    }
    return out;
}

} // namespace vlmbind
