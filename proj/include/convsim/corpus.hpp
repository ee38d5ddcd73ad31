#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convsim/errors.hpp"

namespace convsim {

struct RawComment {
    std::string id;
    std::optional<std::string> parent_id;
    std::string author;
    std::string body;
};

struct ConversationPair {
    std::string input_text;
    std::string response_text;
};

enum class FilterReason { TooLong, LowAlpha, BadPrefix, BotAuthor };
const char* filter_reason_name(FilterReason r);

struct FilterResult {
    bool keep = false;
    FilterReason reason = FilterReason::TooLong;  // meaningful only when !keep
};

// Rejects when any rule fires, checked in order: Unicode scalar count >= 350;
// alphabetic ratio <= 0.70 (empty body rejects); raw body starts with
// "https", "/r/" or "@"; lowercased author contains "bot".
FilterResult filter_comment(const RawComment& c);

struct ExtractStats {
    std::size_t kept = 0;
    std::map<std::string, std::size_t> rejected_by_reason;
    std::size_t pairs = 0;
    std::size_t malformed = 0;
};

// One pair per parent-child edge where both comments pass the filters.
// Children are emitted in input order; the stream may be unordered.
std::vector<ConversationPair> extract_pairs(const std::vector<RawComment>& comments,
                                            ExtractStats* stats = nullptr);

enum class NliLabel { Entailment, Contradiction, Neutral };
std::optional<NliLabel> parse_nli_label(std::string_view s);

struct NLIExample {
    std::string premise;
    std::string hypothesis;
    NliLabel label = NliLabel::Neutral;
};

enum class StsGenre { Captions, Forums, News };
const char* sts_genre_name(StsGenre g);

struct STSExample {
    std::string sentence1;
    std::string sentence2;
    double gold = 0.0;  // in [0, 5]
    StsGenre genre = StsGenre::Captions;
    std::string split;  // train / dev / test
};

enum class CqaRelevance { PerfectMatch, Relevant, Irrelevant };

struct CQACandidate {
    std::string text;
    CqaRelevance relevance = CqaRelevance::Irrelevant;
};

struct CQAQuery {
    std::string original;
    std::vector<CQACandidate> candidates;  // at most 10, at least 1
};

// JSON-object lines with fields id, parent_id (null when absent), author,
// body. Malformed lines are counted, never fatal.
std::vector<RawComment> load_comments_jsonl(const std::filesystem::path& path,
                                            std::size_t* malformed = nullptr);

// Tab-separated input/response, one pair per line; tabs and newlines inside
// the text are replaced by single spaces at write time.
void write_pairs_tsv(const std::filesystem::path& path,
                     const std::vector<ConversationPair>& pairs);
std::vector<ConversationPair> load_pairs_tsv(const std::filesystem::path& path,
                                             std::size_t* malformed = nullptr);

// JSON lines with sentence1, sentence2, gold_label; examples with labels
// outside the 3-way set are dropped and counted.
std::vector<NLIExample> load_nli(const std::filesystem::path& path,
                                 std::size_t* dropped = nullptr);

// STS benchmark layout: genre \t file \t year \t id \t score \t s1 \t s2.
// The split tag comes from the caller (the distribution uses one file per split).
std::vector<STSExample> load_sts(const std::filesystem::path& path, const std::string& split,
                                 std::size_t* dropped = nullptr);

// JSON lines: {"original": ..., "candidates": [{"text":..., "relevance":...}]}.
std::vector<CQAQuery> load_cqa(const std::filesystem::path& path,
                               std::size_t* dropped = nullptr);

}  // namespace convsim
