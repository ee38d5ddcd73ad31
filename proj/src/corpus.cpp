#include "convsim/corpus.hpp"

#include <unicode/uchar.h>
#include <unicode/utf8.h>

#include <algorithm>
#include <fstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace convsim {

using nlohmann::json;

const char* filter_reason_name(FilterReason r) {
    switch (r) {
        case FilterReason::TooLong: return "too_long";
        case FilterReason::LowAlpha: return "low_alpha";
        case FilterReason::BadPrefix: return "bad_prefix";
        case FilterReason::BotAuthor: return "bot_author";
    }
    return "unknown";
}

namespace {

struct CharCounts {
    std::size_t total = 0;
    std::size_t alphabetic = 0;
};

CharCounts count_chars(const std::string& s) {
    CharCounts counts;
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(s.data());
    const auto len = static_cast<std::int32_t>(s.size());
    std::int32_t i = 0;
    while (i < len) {
        UChar32 c = 0;
        U8_NEXT(bytes, i, len, c);
        ++counts.total;
        // invalid byte sequences count as non-alphabetic scalars
        if (c >= 0 && u_isalpha(c)) ++counts.alphabetic;
    }
    return counts;
}

bool author_contains_bot(const std::string& author) {
    std::string lowered;
    lowered.reserve(author.size());
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(author.data());
    const auto len = static_cast<std::int32_t>(author.size());
    std::int32_t i = 0;
    while (i < len) {
        UChar32 c = 0;
        U8_NEXT(bytes, i, len, c);
        if (c < 0) continue;
        UChar32 lc = u_tolower(c);
        char buf[U8_MAX_LENGTH];
        std::int32_t n = 0;
        U8_APPEND_UNSAFE(buf, n, lc);
        lowered.append(buf, static_cast<std::size_t>(n));
    }
    return lowered.find("bot") != std::string::npos;
}

}  // namespace

FilterResult filter_comment(const RawComment& c) {
    CharCounts counts = count_chars(c.body);
    if (counts.total >= 350) return {false, FilterReason::TooLong};
    if (counts.total == 0 ||
        static_cast<double>(counts.alphabetic) / static_cast<double>(counts.total) <= 0.70) {
        return {false, FilterReason::LowAlpha};
    }
    if (c.body.starts_with("https") || c.body.starts_with("/r/") || c.body.starts_with("@")) {
        return {false, FilterReason::BadPrefix};
    }
    if (author_contains_bot(c.author)) return {false, FilterReason::BotAuthor};
    return {true, FilterReason::TooLong};
}

std::vector<ConversationPair> extract_pairs(const std::vector<RawComment>& comments,
                                            ExtractStats* stats) {
    ExtractStats local;
    ExtractStats& st = stats ? *stats : local;

    // id -> pass/fail of the filter, hash-join over the unordered stream
    std::unordered_map<std::string, const RawComment*> by_id;
    std::unordered_map<std::string, bool> passes;
    by_id.reserve(comments.size());
    for (const RawComment& c : comments) {
        if (c.id.empty()) {
            ++st.malformed;
            continue;
        }
        FilterResult fr = filter_comment(c);
        if (fr.keep) {
            ++st.kept;
        } else {
            ++st.rejected_by_reason[filter_reason_name(fr.reason)];
        }
        by_id.emplace(c.id, &c);
        passes.emplace(c.id, fr.keep);
    }

    std::vector<ConversationPair> pairs;
    for (const RawComment& child : comments) {
        if (child.id.empty() || !child.parent_id) continue;
        auto pit = by_id.find(*child.parent_id);
        if (pit == by_id.end()) continue;
        if (!passes.at(child.id) || !passes.at(pit->first)) continue;
        pairs.push_back(ConversationPair{pit->second->body, child.body});
    }
    st.pairs = pairs.size();
    return pairs;
}

std::optional<NliLabel> parse_nli_label(std::string_view s) {
    if (s == "entailment") return NliLabel::Entailment;
    if (s == "contradiction") return NliLabel::Contradiction;
    if (s == "neutral") return NliLabel::Neutral;
    return std::nullopt;
}

const char* sts_genre_name(StsGenre g) {
    switch (g) {
        case StsGenre::Captions: return "captions";
        case StsGenre::Forums: return "forums";
        case StsGenre::News: return "news";
    }
    return "unknown";
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read file: " + path.string());
    return in;
}

void bump(std::size_t* counter) {
    if (counter) ++*counter;
}

}  // namespace

std::vector<RawComment> load_comments_jsonl(const std::filesystem::path& path,
                                            std::size_t* malformed) {
    auto in = open_or_throw(path);
    std::vector<RawComment> comments;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("id") || !j["id"].is_string() ||
            j["id"].get<std::string>().empty()) {
            bump(malformed);
            continue;
        }
        RawComment c;
        c.id = j["id"].get<std::string>();
        if (j.contains("parent_id") && j["parent_id"].is_string()) {
            c.parent_id = j["parent_id"].get<std::string>();
        }
        c.author = j.value("author", "");
        c.body = j.value("body", "");
        comments.push_back(std::move(c));
    }
    return comments;
}

namespace {
std::string sanitize_field(std::string s) {
    for (char& c : s) {
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    return s;
}
}  // namespace

void write_pairs_tsv(const std::filesystem::path& path,
                     const std::vector<ConversationPair>& pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write file: " + path.string());
    for (const auto& p : pairs) {
        out << sanitize_field(p.input_text) << "\t" << sanitize_field(p.response_text) << "\n";
    }
    if (!out) throw DataError("write failure: " + path.string());
}

std::vector<ConversationPair> load_pairs_tsv(const std::filesystem::path& path,
                                             std::size_t* malformed) {
    auto in = open_or_throw(path);
    std::vector<ConversationPair> pairs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            bump(malformed);
            continue;
        }
        pairs.push_back(ConversationPair{line.substr(0, tab), line.substr(tab + 1)});
    }
    return pairs;
}

std::vector<NLIExample> load_nli(const std::filesystem::path& path, std::size_t* dropped) {
    auto in = open_or_throw(path);
    std::vector<NLIExample> examples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("sentence1") ||
            !j.contains("sentence2") || !j.contains("gold_label")) {
            bump(dropped);
            continue;
        }
        auto label = parse_nli_label(j["gold_label"].get<std::string>());
        if (!label) {
            bump(dropped);
            continue;
        }
        examples.push_back(NLIExample{j["sentence1"].get<std::string>(),
                                      j["sentence2"].get<std::string>(), *label});
    }
    return examples;
}

std::vector<STSExample> load_sts(const std::filesystem::path& path, const std::string& split,
                                 std::size_t* dropped) {
    auto in = open_or_throw(path);
    std::vector<STSExample> examples;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            if (tab == std::string::npos) {
                fields.push_back(line.substr(start));
                break;
            }
            fields.push_back(line.substr(start, tab - start));
            start = tab + 1;
        }
        if (fields.size() < 7) {
            bump(dropped);
            continue;
        }
        STSExample e;
        const std::string& genre = fields[0];
        if (genre.find("caption") != std::string::npos) {
            e.genre = StsGenre::Captions;
        } else if (genre.find("forum") != std::string::npos) {
            e.genre = StsGenre::Forums;
        } else if (genre.find("news") != std::string::npos) {
            e.genre = StsGenre::News;
        } else {
            bump(dropped);
            continue;
        }
        try {
            e.gold = std::stod(fields[4]);
        } catch (const std::exception&) {
            bump(dropped);
            continue;
        }
        if (e.gold < 0.0 || e.gold > 5.0) {
            bump(dropped);
            continue;
        }
        e.sentence1 = fields[5];
        e.sentence2 = fields[6];
        e.split = split;
        examples.push_back(std::move(e));
    }
    return examples;
}

std::vector<CQAQuery> load_cqa(const std::filesystem::path& path, std::size_t* dropped) {
    auto in = open_or_throw(path);
    std::vector<CQAQuery> queries;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("original") ||
            !j.contains("candidates") || !j["candidates"].is_array()) {
            bump(dropped);
            continue;
        }
        CQAQuery q;
        q.original = j["original"].get<std::string>();
        bool ok = true;
        for (const auto& cj : j["candidates"]) {
            if (!cj.is_object() || !cj.contains("text") || !cj.contains("relevance")) {
                ok = false;
                break;
            }
            CQACandidate cand;
            cand.text = cj["text"].get<std::string>();
            std::string rel = cj["relevance"].get<std::string>();
            if (rel == "PerfectMatch") {
                cand.relevance = CqaRelevance::PerfectMatch;
            } else if (rel == "Relevant") {
                cand.relevance = CqaRelevance::Relevant;
            } else if (rel == "Irrelevant") {
                cand.relevance = CqaRelevance::Irrelevant;
            } else {
                ok = false;
                break;
            }
            q.candidates.push_back(std::move(cand));
        }
        if (!ok || q.candidates.empty() || q.candidates.size() > 10) {
            bump(dropped);
            continue;
        }
        queries.push_back(std::move(q));
    }
    return queries;
}

}  // namespace convsim
