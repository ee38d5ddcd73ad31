#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kCli = CONVSIM_CLI_PATH;
const fs::path kFixtures = CONVSIM_FIXTURE_DIR;

struct RunResult {
    int exit_code = -1;
    std::string out;
};

fs::path work_dir() {
    static fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "convsim_cli_test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

RunResult run(const std::string& args) {
    fs::path out = work_dir() / "stdout.txt";
    std::string cmd = kCli + " " + args + " > " + out.string() + " 2> " +
                      (work_dir() / "stderr.txt").string();
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out);
    std::ostringstream ss;
    ss << in.rdbuf();
    r.out = ss.str();
    return r;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

// builds a tiny vocab + checkpoint once and reuses them across test cases
struct TrainedArtifacts {
    fs::path pairs;
    fs::path vocab;
    fs::path ckpt;
};

const TrainedArtifacts& artifacts() {
    static TrainedArtifacts a = [] {
        TrainedArtifacts t;
        t.pairs = work_dir() / "pairs.tsv";
        t.vocab = work_dir() / "vocab.txt";
        t.ckpt = work_dir() / "model.ckpt";
        std::ostringstream pairs;
        const char* topics[] = {"weather", "cooking", "music", "travel"};
        for (int i = 0; i < 24; ++i) {
            const char* topic = topics[i % 4];
            pairs << "tell me about " << topic << " number " << i % 6 << "\t"
                  << "here is the " << topic << " answer " << i % 6 << "\n";
        }
        write_file(t.pairs, pairs.str());
        auto bv = run("build-vocab --pairs " + t.pairs.string() + " --out " + t.vocab.string());
        REQUIRE(bv.exit_code == 0);
        auto tr = run("train --pairs " + t.pairs.string() + " --vocab " + t.vocab.string() +
                      " --out " + t.ckpt.string() +
                      " --steps 40 --switch-step 30 --batch-size 4 --seed 7" +
                      " --embed-dim 8 --dan-layers 8,8 --dan-input-dim 8");
        REQUIRE(tr.exit_code == 0);
        return t;
    }();
    return a;
}

}  // namespace

TEST_CASE("extract reproduces the golden pair file and stats") {
    fs::path out = work_dir() / "extracted.tsv";
    auto r = run("extract --comments " + (kFixtures / "comments_golden.jsonl").string() +
                 " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(read_file(out) == read_file(kFixtures / "pairs_golden.tsv"));
    json stats = json::parse(r.out);
    CHECK(stats["kept"] == 14);
    CHECK(stats["pairs"] == 8);
    CHECK(stats["malformed"] == 0);
    CHECK(stats["rejected"]["too_long"] == 1);
    CHECK(stats["rejected"]["low_alpha"] == 2);
    CHECK(stats["rejected"]["bad_prefix"] == 4);
    CHECK(stats["rejected"]["bot_author"] == 4);

    // a second run is byte-identical
    fs::path out2 = work_dir() / "extracted2.tsv";
    auto r2 = run("extract --comments " + (kFixtures / "comments_golden.jsonl").string() +
                  " --out " + out2.string());
    REQUIRE(r2.exit_code == 0);
    CHECK(read_file(out2) == read_file(out));
    CHECK(r2.out == r.out);
}

TEST_CASE("extract on an empty file succeeds with zero stats") {
    fs::path empty = work_dir() / "empty.jsonl";
    write_file(empty, "");
    fs::path out = work_dir() / "empty_pairs.tsv";
    auto r = run("extract --comments " + empty.string() + " --out " + out.string());
    REQUIRE(r.exit_code == 0);
    CHECK(read_file(out).empty());
    json stats = json::parse(r.out);
    CHECK(stats["kept"] == 0);
    CHECK(stats["pairs"] == 0);
}

TEST_CASE("missing input path exits with the data error code") {
    auto r = run("extract --comments /nonexistent/file.jsonl --out " +
                 (work_dir() / "x.tsv").string());
    CHECK(r.exit_code == 2);
}

TEST_CASE("missing required flag exits with the usage code") {
    auto r = run("extract --comments only_this.jsonl");
    CHECK(r.exit_code == 1);
}

TEST_CASE("train then sim: a sentence scores 5.0 against itself") {
    const auto& a = artifacts();
    auto r = run("sim --checkpoint " + a.ckpt.string() + " --vocab " + a.vocab.string() +
                 " \"tell me about music\" \"tell me about music\" --raw");
    REQUIRE(r.exit_code == 0);
    json j = json::parse(r.out);
    CHECK(j["score"].get<double>() == doctest::Approx(5.0).epsilon(1e-9));
    CHECK(j["raw"].get<double>() == doctest::Approx(0.0).epsilon(1e-6));
    // different sentences score below 5
    auto r2 = run("sim --checkpoint " + a.ckpt.string() + " --vocab " + a.vocab.string() +
                  " \"tell me about music\" \"here is the travel answer\"");
    REQUIRE(r2.exit_code == 0);
    CHECK(json::parse(r2.out)["score"].get<double>() < 5.0);
}

TEST_CASE("sim with a sentence that tokenizes to nothing is a data error") {
    const auto& a = artifacts();
    auto r = run("sim --checkpoint " + a.ckpt.string() + " --vocab " + a.vocab.string() +
                 " \"   \" \"tell me about music\"");
    CHECK(r.exit_code == 2);
}

TEST_CASE("embed emits unit-norm vectors, one per line") {
    const auto& a = artifacts();
    fs::path input = work_dir() / "embed_in.txt";
    write_file(input, "tell me about weather\nhere is the cooking answer\n");
    auto r = run("embed --checkpoint " + a.ckpt.string() + " --vocab " + a.vocab.string() +
                 " --file " + input.string());
    REQUIRE(r.exit_code == 0);
    std::istringstream lines(r.out);
    std::string line;
    std::size_t count = 0;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double x, norm2 = 0.0;
        std::size_t dims = 0;
        while (ls >> x) {
            norm2 += x * x;
            ++dims;
        }
        CHECK(dims == 8);
        CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-6));
        ++count;
    }
    CHECK(count == 2);
}

TEST_CASE("eval-response is deterministic and bounded") {
    const auto& a = artifacts();
    std::string cmd = "eval-response --checkpoint " + a.ckpt.string() + " --vocab " +
                      a.vocab.string() + " --pairs " + a.pairs.string() +
                      " --negatives 9 --n 1,3 --seed 11";
    auto r1 = run(cmd);
    auto r2 = run(cmd);
    REQUIRE(r1.exit_code == 0);
    CHECK(r1.out == r2.out);
    json metrics = json::parse(r1.out);
    REQUIRE(metrics.size() == 2);
    double p1 = -1.0, p3 = -1.0;
    for (const auto& m : metrics) {
        if (m["metric"] == "P@1") p1 = m["value"].get<double>();
        if (m["metric"] == "P@3") p3 = m["value"].get<double>();
    }
    CHECK(p1 >= 0.0);
    CHECK(p1 <= 1.0);
    CHECK(p3 >= p1);
}

TEST_CASE("eval-sts reports per-genre correlations and writes the csv") {
    const auto& a = artifacts();
    fs::path sts = work_dir() / "sts_test.tsv";
    std::ostringstream data;
    // repeated-token sentences give spread-out predictions
    data << "main-captions\tf\t2016\t1\t5.0\ttell me about music\ttell me about music\n";
    data << "main-captions\tf\t2016\t2\t2.0\ttell me about music\there is the travel answer\n";
    data << "main-captions\tf\t2016\t3\t1.0\tweather number 1\tcooking answer 4\n";
    data << "main-news\tf\t2016\t4\t4.0\ttell me about weather\ttell me about weather number 2\n";
    data << "main-news\tf\t2016\t5\t0.5\tmusic number 3\there is the weather answer\n";
    data << "main-news\tf\t2016\t6\t3.0\tcooking number 2\tcooking number 5\n";
    write_file(sts, data.str());
    fs::path csv = work_dir() / "sts_out.csv";
    auto r = run("eval-sts --checkpoint " + a.ckpt.string() + " --vocab " + a.vocab.string() +
                 " --data " + sts.string() + " --emit-csv " + csv.string());
    REQUIRE(r.exit_code == 0);
    json metrics = json::parse(r.out);
    bool saw_all = false, saw_captions = false, saw_news = false;
    for (const auto& m : metrics) {
        CHECK(m["metric"] == "pearson_r");
        double v = m["value"].get<double>();
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
        if (m["genre"] == "all") saw_all = true;
        if (m["genre"] == "captions") saw_captions = true;
        if (m["genre"] == "news") saw_news = true;
    }
    CHECK(saw_all);
    CHECK(saw_captions);
    CHECK(saw_news);
    std::string csv_text = read_file(csv);
    CHECK(csv_text.starts_with("gold,pred,genre\n"));
    CHECK(std::count(csv_text.begin(), csv_text.end(), '\n') == 7);  // header + 6 rows
}

TEST_CASE("eval-cqa reports MAP in [0, 100]") {
    const auto& a = artifacts();
    fs::path cqa = work_dir() / "cqa.jsonl";
    std::ostringstream data;
    data << R"({"original":"tell me about music","candidates":[)"
         << R"({"text":"tell me about music number 2","relevance":"PerfectMatch"},)"
         << R"({"text":"here is the travel answer","relevance":"Irrelevant"},)"
         << R"({"text":"music number 4","relevance":"Relevant"}]})" << "\n";
    data << R"({"original":"weather number 1","candidates":[)"
         << R"({"text":"tell me about weather","relevance":"Relevant"},)"
         << R"({"text":"cooking answer 3","relevance":"Irrelevant"}]})" << "\n";
    write_file(cqa, data.str());
    auto r = run("eval-cqa --checkpoint " + a.ckpt.string() + " --vocab " + a.vocab.string() +
                 " --data " + cqa.string());
    REQUIRE(r.exit_code == 0);
    json metrics = json::parse(r.out);
    REQUIRE(metrics.size() == 1);
    CHECK(metrics[0]["metric"] == "MAP");
    double map = metrics[0]["value"].get<double>();
    CHECK(map >= 0.0);
    CHECK(map <= 100.0);
    // deterministic
    auto r2 = run("eval-cqa --checkpoint " + a.ckpt.string() + " --vocab " + a.vocab.string() +
                  " --data " + cqa.string());
    CHECK(r2.out == r.out);
}

TEST_CASE("training with --nli-fraction 0 and an nli file still succeeds") {
    const auto& a = artifacts();
    fs::path nli = work_dir() / "nli.jsonl";
    std::ostringstream data;
    for (int i = 0; i < 12; ++i) {
        const char* label = i % 3 == 0 ? "entailment" : (i % 3 == 1 ? "contradiction" : "neutral");
        data << R"({"sentence1":"tell me about music number )" << i % 4
             << R"(","sentence2":"here is the music answer )" << i % 4
             << R"(","gold_label":")" << label << R"("})" << "\n";
    }
    write_file(nli, data.str());
    fs::path ckpt = work_dir() / "model_nli.ckpt";
    fs::path telemetry = work_dir() / "telemetry.jsonl";
    auto r = run("train --pairs " + a.pairs.string() + " --vocab " + a.vocab.string() +
                 " --out " + ckpt.string() + " --nli " + nli.string() +
                 " --nli-fraction 0 --steps 10 --switch-step 8 --batch-size 4 --seed 7" +
                 " --embed-dim 8 --dan-layers 8,8 --dan-input-dim 8 --telemetry " +
                 telemetry.string());
    REQUIRE(r.exit_code == 0);
    json j = json::parse(r.out);
    CHECK(j["steps"] == 10);
    CHECK(j["nli_steps"] == 0);
    // telemetry header carries the resolved config
    std::ifstream tin(telemetry);
    std::string header;
    REQUIRE(std::getline(tin, header));
    json h = json::parse(header);
    CHECK(h["config"]["nli_task_fraction"] == 0.0);
    CHECK(h["config"]["total_steps"] == 10);
    CHECK(h["model"]["encoder"]["kind"] == "dan");

    // multitask training with a nonzero fraction runs nli steps
    auto r2 = run("train --pairs " + a.pairs.string() + " --vocab " + a.vocab.string() +
                  " --out " + ckpt.string() + " --nli " + nli.string() +
                  " --nli-fraction 0.5 --steps 30 --switch-step 20 --batch-size 4 --seed 7" +
                  " --embed-dim 8 --dan-layers 8,8 --dan-input-dim 8");
    REQUIRE(r2.exit_code == 0);
    json j2 = json::parse(r2.out);
    CHECK(j2["nli_steps"].get<int>() > 0);
}

TEST_CASE("retraining with the same seed produces an identical checkpoint") {
    const auto& a = artifacts();
    fs::path ckpt2 = work_dir() / "model_rerun.ckpt";
    auto r = run("train --pairs " + a.pairs.string() + " --vocab " + a.vocab.string() +
                 " --out " + ckpt2.string() +
                 " --steps 40 --switch-step 30 --batch-size 4 --seed 7" +
                 " --embed-dim 8 --dan-layers 8,8 --dan-input-dim 8");
    REQUIRE(r.exit_code == 0);
    CHECK(read_file(ckpt2) == read_file(a.ckpt));
}
