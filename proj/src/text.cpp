#include "convsim/text.hpp"

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace convsim {

namespace {

const icu::Normalizer2& nfkc() {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* norm = icu::Normalizer2::getNFKCInstance(status);
    if (U_FAILURE(status) || norm == nullptr) {
        throw Error("ICU NFKC normalizer unavailable");
    }
    return *norm;
}

}  // namespace

std::vector<std::string> normalize_tokenize(std::string_view text) {
    icu::UnicodeString us = icu::UnicodeString::fromUTF8(
        icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    UErrorCode status = U_ZERO_ERROR;
    icu::UnicodeString normalized = nfkc().normalize(us, status);
    if (U_FAILURE(status)) throw Error("NFKC normalization failed");
    normalized.toLower(icu::Locale::getRoot());

    std::vector<std::string> tokens;
    icu::UnicodeString current;
    auto flush = [&] {
        if (!current.isEmpty()) {
            std::string utf8;
            current.toUTF8String(utf8);
            tokens.push_back(std::move(utf8));
            current.remove();
        }
    };
    for (int32_t i = 0; i < normalized.length();) {
        UChar32 c = normalized.char32At(i);
        i += U16_LENGTH(c);
        if (u_isUWhiteSpace(c)) {
            flush();
        } else if (u_isalnum(c)) {
            current.append(c);
        } else {
            // punctuation and symbols become standalone tokens
            flush();
            icu::UnicodeString one(c);
            std::string utf8;
            one.toUTF8String(utf8);
            tokens.push_back(std::move(utf8));
        }
    }
    flush();
    return tokens;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& corpus,
                             std::size_t min_count, std::size_t max_size) {
    if (min_count < 1) throw Error("build_vocab: min_count must be >= 1");
    std::unordered_map<std::string, std::size_t> word_counts;
    std::unordered_map<std::string, std::size_t> bigram_counts;
    for (const auto& tokens : corpus) {
        for (const auto& t : tokens) ++word_counts[t];
        for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
            ++bigram_counts[tokens[i] + kBigramJoiner + tokens[i + 1]];
        }
    }

    auto rank = [&](const std::unordered_map<std::string, std::size_t>& counts) {
        std::vector<std::pair<std::string, std::size_t>> entries;
        for (const auto& [tok, cnt] : counts) {
            if (cnt >= min_count) entries.emplace_back(tok, cnt);
        }
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (entries.size() > max_size) entries.resize(max_size);
        return entries;
    };

    Vocabulary v;
    std::int32_t next = 2;
    for (const auto& [tok, cnt] : rank(word_counts)) v.word_to_id_.emplace(tok, next++);
    next = 2;
    for (const auto& [tok, cnt] : rank(bigram_counts)) v.bigram_to_id_.emplace(tok, next++);
    return v;
}

std::int32_t Vocabulary::word_id(std::string_view token) const {
    auto it = word_to_id_.find(std::string(token));
    return it == word_to_id_.end() ? kOovId : it->second;
}

std::int32_t Vocabulary::bigram_id(std::string_view a, std::string_view b) const {
    std::string key;
    key.reserve(a.size() + b.size() + 1);
    key.append(a);
    key.push_back(kBigramJoiner);
    key.append(b);
    auto it = bigram_to_id_.find(key);
    return it == bigram_to_id_.end() ? kOovId : it->second;
}

void Vocabulary::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write vocabulary: " + path.string());
    out << "convsim-vocab 1 " << word_to_id_.size() << " " << bigram_to_id_.size() << "\n";
    // sorted by id for a stable file
    auto sorted = [](const std::unordered_map<std::string, std::int32_t>& m) {
        std::vector<std::pair<std::string, std::int32_t>> v(m.begin(), m.end());
        std::sort(v.begin(), v.end(),
                  [](const auto& a, const auto& b) { return a.second < b.second; });
        return v;
    };
    for (const auto& [tok, id] : sorted(word_to_id_)) out << tok << "\t" << id << "\n";
    for (const auto& [tok, id] : sorted(bigram_to_id_)) out << tok << "\t" << id << "\n";
    if (!out) throw DataError("write failure: " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read vocabulary: " + path.string());
    std::string header;
    if (!std::getline(in, header)) throw DataError("empty vocabulary file");
    std::istringstream hs(header);
    std::string magic;
    int version = 0;
    std::size_t n_words = 0, n_bigrams = 0;
    hs >> magic >> version >> n_words >> n_bigrams;
    if (magic != "convsim-vocab" || !hs) throw DataError("not a vocabulary file");
    if (version != 1) throw DataError("unsupported vocabulary version");

    Vocabulary v;
    auto read_entries = [&](std::unordered_map<std::string, std::int32_t>& table,
                            std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            std::string line;
            if (!std::getline(in, line)) throw DataError("truncated vocabulary file");
            auto tab = line.rfind('\t');
            if (tab == std::string::npos) throw DataError("malformed vocabulary line");
            std::int32_t id = std::stoi(line.substr(tab + 1));
            if (id < 2) throw DataError("vocabulary entry uses a reserved id");
            table.emplace(line.substr(0, tab), id);
        }
    };
    read_entries(v.word_to_id_, n_words);
    read_entries(v.bigram_to_id_, n_bigrams);
    return v;
}

FeatureSequence featurize(const std::vector<std::string>& tokens, const Vocabulary& vocab,
                          bool use_bigrams) {
    FeatureSequence fs;
    fs.n_tokens = tokens.size();
    fs.word_ids.reserve(tokens.size());
    for (const auto& t : tokens) fs.word_ids.push_back(vocab.word_id(t));
    if (use_bigrams && tokens.size() >= 2) {
        fs.bigram_ids.reserve(tokens.size() - 1);
        for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
            fs.bigram_ids.push_back(vocab.bigram_id(tokens[i], tokens[i + 1]));
        }
    }
    return fs;
}

}  // namespace convsim
