#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vlmbind/scene.hpp"

namespace vlmbind {

// Word-level tokenizer over prompt text: whitespace split, trailing commas
// peeled into their own token. `split_words` forces selected words to
// tokenize into multiple sub-tokens (exercises multi-token layouts).
class Tokenizer {
public:
    explicit Tokenizer(std::map<std::string, std::vector<std::string>> split_words = {});

    int id_of(const std::string& word); // interns unseen words
    std::optional<int> lookup(const std::string& word) const;
    const std::string& word_of(int id) const;
    int vocab_size() const { return static_cast<int>(words_.size()); }

    int bos_id() const { return 0; }
    int eos_id() const { return 1; }

    // word sequence for a prompt string, split rules applied
    std::vector<int> encode(const std::string& text);
    std::string decode(const std::vector<int>& ids) const;

    bool is_split_word(const std::string& word) const { return split_.count(word) != 0; }
    // sub-token count a word expands to (1 when not split)
    int expansion_of(const std::string& word) const;

private:
    std::vector<std::string> words_;
    std::map<std::string, int> index_;
    std::map<std::string, std::vector<std::string>> split_;
};

// A contiguous-or-not set of token indices for one logical item; spans
// longer than one entry mark multi-token items.
struct TokenSpan {
    std::vector<int> indices;
    bool multi_token() const { return indices.size() > 1; }
    int first() const { return indices.at(0); }
};

// One described object in the caption.
struct CaptionSlot {
    int object_index = -1; // index into scene.objects
    TokenSpan color;       // C_n
    TokenSpan shape;       // S_n
    std::optional<int> comma;
};

// Resolved token index map for one task instance.
struct TokenLayout {
    int sequence_length = 0;
    int n_image_tokens = 0;
    int image_tokens_begin = 0; // index of the first image token (after BOS)
    // per object (raster order), the token indices of its patches
    std::vector<std::vector<int>> image_token_spans;
    std::vector<CaptionSlot> caption_slots; // caption order
    std::vector<int> comma_tokens;
    std::optional<TokenSpan> query_shape; // color_retrieval template
    int last_token = -1;
    std::vector<int> text_token_ids; // vocab ids of the text region
    int text_begin = 0;              // sequence index of first text token
};

} // namespace vlmbind
