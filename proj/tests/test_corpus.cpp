#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "convsim/corpus.hpp"
#include "convsim/tensor.hpp"

using namespace convsim;

namespace {

RawComment make(std::string id, std::optional<std::string> parent, std::string author,
                std::string body) {
    return RawComment{std::move(id), std::move(parent), std::move(author), std::move(body)};
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("filter_comment length rule") {
    std::string ok = "Plenty of words in here";
    CHECK(filter_comment(make("a", {}, "user", ok)).keep);
    // boundary: 349 scalars pass, 350 reject
    CHECK(filter_comment(make("a", {}, "user", std::string(349, 'x'))).keep);
    auto r = filter_comment(make("a", {}, "user", std::string(350, 'x')));
    CHECK_FALSE(r.keep);
    CHECK(r.reason == FilterReason::TooLong);
    // length counts Unicode scalars, not bytes: 200 two-byte letters pass
    std::string accented;
    for (int i = 0; i < 200; ++i) accented += "\xc3\xa9";  // é
    CHECK(filter_comment(make("a", {}, "user", accented)).keep);
}

TEST_CASE("filter_comment alphabetic ratio rule") {
    // 7 letters / 10 scalars = 0.70 exactly: rejects (rule is <= 0.70)
    auto at = filter_comment(make("a", {}, "user", "abcdefg123"));
    CHECK_FALSE(at.keep);
    CHECK(at.reason == FilterReason::LowAlpha);
    // 17 / 24 = 0.7083: passes
    CHECK(filter_comment(make("a", {}, "user", "abcdefghijklmnopq1234567")).keep);
    auto digits = filter_comment(make("a", {}, "user", "12345 67890 !!!???"));
    CHECK_FALSE(digits.keep);
    CHECK(digits.reason == FilterReason::LowAlpha);
    auto empty = filter_comment(make("a", {}, "user", ""));
    CHECK_FALSE(empty.keep);
    CHECK(empty.reason == FilterReason::LowAlpha);
    // accented letters are alphabetic
    CHECK(filter_comment(make("a", {}, "user", "Crème brûlée tastes wonderful honestly")).keep);
}

TEST_CASE("filter_comment prefix rule") {
    for (const char* body : {"https://example.com has the full article",
                             "httpsomething is not a link but still rejected",
                             "/r/somewhere has the answer", "@someone mentioned this earlier"}) {
        auto r = filter_comment(make("a", {}, "user", body));
        CAPTURE(body);
        CHECK_FALSE(r.keep);
        CHECK(r.reason == FilterReason::BadPrefix);
    }
    // prefix must be at the start of the raw body
    CHECK(filter_comment(make("a", {}, "user", "see https later in the text")).keep);
    // "http" without the s is fine
    CHECK(filter_comment(make("a", {}, "user", "http is an older protocol name")).keep);
}

TEST_CASE("filter_comment bot author rule") {
    const std::string body = "Plenty of words in here";
    for (const char* author : {"GameBot", "ROBOTIC_FAN", "Abbot", "Botanist", "bot", "BOT"}) {
        auto r = filter_comment(make("a", {}, author, body));
        CAPTURE(author);
        CHECK_FALSE(r.keep);
        CHECK(r.reason == FilterReason::BotAuthor);
    }
    CHECK(filter_comment(make("a", {}, "bobcat", body)).keep);
    CHECK(filter_comment(make("a", {}, "bo_t", body)).keep);
}

TEST_CASE("filter rule precedence follows listed order") {
    // 350 chars AND low alpha: too_long wins
    auto r = filter_comment(make("a", {}, "user", std::string(350, '1')));
    CHECK(r.reason == FilterReason::TooLong);
    // low alpha AND bad prefix: low_alpha wins
    r = filter_comment(make("a", {}, "user", "@12345 678"));
    CHECK(r.reason == FilterReason::LowAlpha);
    // bad prefix AND bot author: bad_prefix wins
    r = filter_comment(make("a", {}, "GameBot", "@someone mentioned this earlier"));
    CHECK(r.reason == FilterReason::BadPrefix);
}

TEST_CASE("extract_pairs chain and ordering") {
    const std::string ok1 = "first message with enough letters";
    const std::string ok2 = "second message with enough letters";
    const std::string ok3 = "third message with enough letters";
    SUBCASE("chain A <- B <- C yields two pairs") {
        auto pairs = extract_pairs({make("a", {}, "u", ok1), make("b", "a", "u", ok2),
                                    make("c", "b", "u", ok3)});
        REQUIRE(pairs.size() == 2);
        CHECK(pairs[0].input_text == ok1);
        CHECK(pairs[0].response_text == ok2);
        CHECK(pairs[1].input_text == ok2);
        CHECK(pairs[1].response_text == ok3);
    }
    SUBCASE("unordered stream: child before parent still pairs") {
        auto pairs = extract_pairs({make("b", "a", "u", ok2), make("a", {}, "u", ok1)});
        REQUIRE(pairs.size() == 1);
        CHECK(pairs[0].input_text == ok1);
        CHECK(pairs[0].response_text == ok2);
    }
    SUBCASE("rejected parent drops the edge") {
        ExtractStats st;
        auto pairs = extract_pairs(
            {make("a", {}, "SomeBot", ok1), make("b", "a", "u", ok2)}, &st);
        CHECK(pairs.empty());
        CHECK(st.kept == 1);
        CHECK(st.rejected_by_reason.at("bot_author") == 1);
    }
    SUBCASE("rejected child drops the edge") {
        auto pairs = extract_pairs({make("a", {}, "u", ok1), make("b", "a", "u", "@" + ok2)});
        CHECK(pairs.empty());
    }
    SUBCASE("missing parent id drops the edge") {
        auto pairs = extract_pairs({make("b", "nope", "u", ok2)});
        CHECK(pairs.empty());
    }
    SUBCASE("empty id counts as malformed") {
        ExtractStats st;
        extract_pairs({make("", {}, "u", ok1)}, &st);
        CHECK(st.malformed == 1);
        CHECK(st.kept == 0);
    }
}

TEST_CASE("extract_pairs matches a brute-force edge count on random streams") {
    Rng rng(2024);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<RawComment> comments;
        std::size_t n = 5 + rng.index(95);
        for (std::size_t i = 0; i < n; ++i) {
            RawComment c;
            c.id = "id" + std::to_string(i);
            if (i > 0 && rng.index(4) != 0) {
                c.parent_id = "id" + std::to_string(rng.index(i));
            }
            c.author = rng.index(10) == 0 ? "HelperBot" : "human";
            switch (rng.index(4)) {
                case 0: c.body = "@a mention that gets filtered out"; break;
                case 1: c.body = std::string(360, 'q'); break;
                default: c.body = "a perfectly reasonable comment body"; break;
            }
            comments.push_back(std::move(c));
        }
        // independent oracle: count parent-child edges where both pass
        std::unordered_map<std::string, bool> pass;
        for (const auto& c : comments) pass[c.id] = filter_comment(c).keep;
        std::size_t expected = 0;
        for (const auto& c : comments) {
            if (!c.parent_id) continue;
            auto it = pass.find(*c.parent_id);
            if (it != pass.end() && it->second && pass.at(c.id)) ++expected;
        }
        auto pairs = extract_pairs(comments);
        CHECK(pairs.size() == expected);
    }
}

TEST_CASE("golden extraction fixture reproduces byte for byte") {
    auto dir = std::filesystem::path(CONVSIM_FIXTURE_DIR);
    std::size_t malformed = 0;
    auto comments = load_comments_jsonl(dir / "comments_golden.jsonl", &malformed);
    CHECK(malformed == 0);
    REQUIRE(comments.size() == 25);
    ExtractStats st;
    auto pairs = extract_pairs(comments, &st);
    CHECK(st.kept == 14);
    CHECK(st.rejected_by_reason.at("too_long") == 1);
    CHECK(st.rejected_by_reason.at("low_alpha") == 2);
    CHECK(st.rejected_by_reason.at("bad_prefix") == 4);
    CHECK(st.rejected_by_reason.at("bot_author") == 4);
    CHECK(st.pairs == 8);

    auto out = std::filesystem::temp_directory_path() / "convsim_pairs_test.tsv";
    write_pairs_tsv(out, pairs);
    CHECK(read_file(out) == read_file(dir / "pairs_golden.tsv"));
    std::filesystem::remove(out);
}

TEST_CASE("pairs tsv round trip and sanitization") {
    auto out = std::filesystem::temp_directory_path() / "convsim_pairs_rt.tsv";
    std::vector<ConversationPair> pairs{{"has\ttab and\nnewline", "plain response"},
                                        {"plain input", "carriage\rreturn"}};
    write_pairs_tsv(out, pairs);
    std::size_t malformed = 0;
    auto loaded = load_pairs_tsv(out, &malformed);
    CHECK(malformed == 0);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].input_text == "has tab and newline");
    CHECK(loaded[0].response_text == "plain response");
    CHECK(loaded[1].response_text == "carriage return");
    std::filesystem::remove(out);
}

TEST_CASE("load_comments_jsonl skips malformed lines") {
    auto p = std::filesystem::temp_directory_path() / "convsim_comments_bad.jsonl";
    {
        std::ofstream out(p);
        out << R"({"id":"a","parent_id":null,"author":"u","body":"fine"})" << "\n";
        out << "not json at all\n";
        out << R"({"author":"u","body":"missing id"})" << "\n";
        out << R"({"id":"","author":"u","body":"empty id"})" << "\n";
        out << R"({"id":"b","parent_id":"a","author":"u","body":"fine too"})" << "\n";
    }
    std::size_t malformed = 0;
    auto comments = load_comments_jsonl(p, &malformed);
    CHECK(comments.size() == 2);
    CHECK(malformed == 3);
    CHECK_FALSE(comments[0].parent_id.has_value());
    CHECK(comments[1].parent_id == "a");
    std::filesystem::remove(p);
    CHECK_THROWS_AS(load_comments_jsonl("/nonexistent/comments.jsonl"), DataError);
}

TEST_CASE("load_nli parses the three-way labels and drops the rest") {
    auto p = std::filesystem::temp_directory_path() / "convsim_nli.jsonl";
    {
        std::ofstream out(p);
        out << R"({"sentence1":"p1","sentence2":"h1","gold_label":"entailment"})" << "\n";
        out << R"({"sentence1":"p2","sentence2":"h2","gold_label":"contradiction"})" << "\n";
        out << R"({"sentence1":"p3","sentence2":"h3","gold_label":"neutral"})" << "\n";
        out << R"({"sentence1":"p4","sentence2":"h4","gold_label":"-"})" << "\n";
        out << R"({"sentence1":"p5","gold_label":"neutral"})" << "\n";
    }
    std::size_t dropped = 0;
    auto examples = load_nli(p, &dropped);
    REQUIRE(examples.size() == 3);
    CHECK(dropped == 2);
    CHECK(examples[0].label == NliLabel::Entailment);
    CHECK(examples[1].label == NliLabel::Contradiction);
    CHECK(examples[2].label == NliLabel::Neutral);
    std::filesystem::remove(p);
    CHECK_FALSE(parse_nli_label("Entailment").has_value());
    CHECK_FALSE(parse_nli_label("").has_value());
}

TEST_CASE("load_sts parses genre, gold bounds, and seven columns") {
    auto p = std::filesystem::temp_directory_path() / "convsim_sts.tsv";
    {
        std::ofstream out(p);
        out << "main-captions\tMSRvid\t2012\t1\t5.0\tA dog runs.\tA dog is running.\n";
        out << "main-forums\tanswers\t2015\t2\t0.0\tHello there.\tGoodbye now.\n";
        out << "main-news\theadlines\t2013\t3\t2.6\tStocks rose.\tMarkets fell.\n";
        out << "main-news\theadlines\t2013\t4\t5.1\tOut of range.\tDropped.\n";
        out << "main-news\theadlines\t2013\t5\tnotanumber\tBad.\tDropped.\n";
        out << "mystery-genre\tx\t2013\t6\t3.0\tUnknown genre.\tDropped.\n";
        out << "main-news\tonly\tfour\tcolumns\n";
    }
    std::size_t dropped = 0;
    auto examples = load_sts(p, "test", &dropped);
    REQUIRE(examples.size() == 3);
    CHECK(dropped == 4);
    CHECK(examples[0].genre == StsGenre::Captions);
    CHECK(examples[0].gold == doctest::Approx(5.0));
    CHECK(examples[0].split == "test");
    CHECK(examples[1].genre == StsGenre::Forums);
    CHECK(examples[1].gold == doctest::Approx(0.0));
    CHECK(examples[2].genre == StsGenre::News);
    CHECK(examples[2].sentence2 == "Markets fell.");
    std::filesystem::remove(p);
}

TEST_CASE("load_cqa enforces candidate structure and count") {
    auto p = std::filesystem::temp_directory_path() / "convsim_cqa.jsonl";
    {
        std::ofstream out(p);
        // full ten candidates, mixed relevance
        out << R"({"original":"q1","candidates":[)";
        for (int i = 0; i < 10; ++i) {
            if (i) out << ",";
            const char* rel = i == 0 ? "PerfectMatch" : (i == 1 ? "Relevant" : "Irrelevant");
            out << R"({"text":"cand)" << i << R"(","relevance":")" << rel << R"("})";
        }
        out << "]}\n";
        out << R"({"original":"q2","candidates":[{"text":"c","relevance":"Irrelevant"}]})" << "\n";
        out << R"({"original":"q3","candidates":[]})" << "\n";
        out << R"({"original":"q4","candidates":[{"text":"c","relevance":"Maybe"}]})" << "\n";
        // eleven candidates: dropped
        out << R"({"original":"q5","candidates":[)";
        for (int i = 0; i < 11; ++i) {
            if (i) out << ",";
            out << R"({"text":"c","relevance":"Irrelevant"})";
        }
        out << "]}\n";
    }
    std::size_t dropped = 0;
    auto queries = load_cqa(p, &dropped);
    REQUIRE(queries.size() == 2);
    CHECK(dropped == 3);
    CHECK(queries[0].candidates.size() == 10);
    CHECK(queries[0].candidates[0].relevance == CqaRelevance::PerfectMatch);
    CHECK(queries[0].candidates[1].relevance == CqaRelevance::Relevant);
    CHECK(queries[1].candidates.size() == 1);
    std::filesystem::remove(p);
}
