#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "convsim/errors.hpp"

namespace convsim {

// NFKC normalization, lowercasing, punctuation isolated into standalone
// tokens, whitespace collapsed. Deterministic; empty input gives an empty
// sequence. The committed tokenizer fixture file is the behavioral oracle.
std::vector<std::string> normalize_tokenize(std::string_view text);

struct FeatureSequence {
    std::vector<std::int32_t> word_ids;
    std::vector<std::int32_t> bigram_ids;  // always max(|word_ids| - 1, 0) when bigrams on
    std::size_t n_tokens = 0;
};

// Word and bigram id tables with reserved PAD=0 and OOV=1. Ids are dense and
// stable across save/load. Bigram keys join the two tokens with the ASCII
// unit separator.
class Vocabulary {
public:
    static constexpr std::int32_t kPadId = 0;
    static constexpr std::int32_t kOovId = 1;
    static constexpr char kBigramJoiner = '\x1f';

    static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                            std::size_t min_count, std::size_t max_size);

    std::int32_t word_id(std::string_view token) const;
    std::int32_t bigram_id(std::string_view a, std::string_view b) const;

    // Table sizes including the two reserved ids.
    std::size_t word_table_size() const { return word_to_id_.size() + 2; }
    std::size_t bigram_table_size() const { return bigram_to_id_.size() + 2; }

    void save(const std::filesystem::path& path) const;
    static Vocabulary load(const std::filesystem::path& path);

    bool operator==(const Vocabulary& other) const = default;

private:
    std::unordered_map<std::string, std::int32_t> word_to_id_;
    std::unordered_map<std::string, std::int32_t> bigram_to_id_;
};

FeatureSequence featurize(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                          bool use_bigrams);

}  // namespace convsim
