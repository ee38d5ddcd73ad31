#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "convsim/corpus.hpp"
#include "convsim/dual_model.hpp"
#include "convsim/evaluation.hpp"
#include "convsim/text.hpp"
#include "convsim/training.hpp"

namespace {

using convsim::DualModel;
using convsim::FeatureSequence;
using convsim::ParameterStore;
using convsim::Vocabulary;
using nlohmann::json;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::uint64_t default_seed() {
    if (const char* env = std::getenv("CONVSIM_SEED")) {
        return std::strtoull(env, nullptr, 10);
    }
    return 0;
}

struct LoadedModel {
    Vocabulary vocab;
    ParameterStore store{0};
    std::optional<DualModel> model;
    convsim::CheckpointMeta meta;
};

LoadedModel load_model(const std::string& checkpoint, const std::string& vocab_path) {
    LoadedModel lm;
    lm.vocab = Vocabulary::load(vocab_path);
    lm.meta = convsim::load_model_checkpoint(checkpoint, lm.store);
    lm.model.emplace(lm.meta.model);
    return lm;
}

FeatureSequence featurize_sentence(const LoadedModel& lm, const std::string& text) {
    bool bigrams = lm.meta.model.encoder.kind == convsim::EncoderKind::Dan;
    return convsim::featurize(convsim::normalize_tokenize(text), lm.vocab, bigrams);
}

int cmd_extract(const std::string& comments_path, const std::string& out_path) {
    std::size_t malformed = 0;
    auto comments = convsim::load_comments_jsonl(comments_path, &malformed);
    convsim::ExtractStats stats;
    stats.malformed = malformed;
    auto pairs = convsim::extract_pairs(comments, &stats);
    convsim::write_pairs_tsv(out_path, pairs);
    json j;
    j["kept"] = stats.kept;
    j["pairs"] = stats.pairs;
    j["malformed"] = stats.malformed;
    j["rejected"] = stats.rejected_by_reason;
    std::cout << j.dump(2) << "\n";
    return 0;
}

int cmd_build_vocab(const std::string& pairs_path, const std::string& out_path,
                    std::size_t min_count, std::size_t max_size) {
    auto pairs = convsim::load_pairs_tsv(pairs_path);
    std::vector<std::vector<std::string>> corpus;
    corpus.reserve(pairs.size() * 2);
    for (const auto& p : pairs) {
        corpus.push_back(convsim::normalize_tokenize(p.input_text));
        corpus.push_back(convsim::normalize_tokenize(p.response_text));
    }
    Vocabulary vocab = Vocabulary::build(corpus, min_count, max_size);
    vocab.save(out_path);
    json j;
    j["words"] = vocab.word_table_size();
    j["bigrams"] = vocab.bigram_table_size();
    std::cout << j.dump(2) << "\n";
    return 0;
}

std::vector<std::size_t> parse_layer_list(const std::string& csv) {
    std::vector<std::size_t> layers;
    std::size_t start = 0;
    while (start <= csv.size()) {
        auto comma = csv.find(',', start);
        std::string part =
            comma == std::string::npos ? csv.substr(start) : csv.substr(start, comma - start);
        if (!part.empty()) layers.push_back(std::stoul(part));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return layers;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"convsim: conversational-response sentence embeddings"};
    app.require_subcommand(1);

    // extract
    auto* extract = app.add_subcommand("extract", "Extract input-response pairs from comments");
    std::string comments_path, pairs_out;
    extract->add_option("--comments", comments_path, "JSONL comment file")->required();
    extract->add_option("--out", pairs_out, "Output TSV pair file")->required();

    // build-vocab
    auto* build_vocab = app.add_subcommand("build-vocab", "Build a vocabulary from a pair file");
    std::string bv_pairs, bv_out;
    std::size_t bv_min_count = 1, bv_max_size = 1000000;
    build_vocab->add_option("--pairs", bv_pairs, "TSV pair file")->required();
    build_vocab->add_option("--out", bv_out, "Output vocabulary file")->required();
    build_vocab->add_option("--min-count", bv_min_count, "Minimum token frequency");
    build_vocab->add_option("--max-size", bv_max_size, "Maximum table size");

    // train
    auto* train_cmd = app.add_subcommand("train", "Train the dual encoder");
    std::string tr_pairs, tr_vocab, tr_out, tr_nli, tr_config, tr_telemetry, tr_init_from;
    std::string tr_encoder = "dan", tr_dan_layers, tr_task_losses;
    std::uint64_t tr_seed = default_seed();
    bool tr_seed_set = false;
    std::size_t tr_steps = 0, tr_switch = 0, tr_batch = 0, tr_ckpt_every = 0;
    std::size_t tf_layers = 0, tf_heads = 0, tf_hidden = 0, tf_filter = 0;
    std::size_t tr_embed_dim = 0, tr_dan_input_dim = 0;
    double tr_lr = -1.0, tr_nli_fraction = -1.0;
    train_cmd->add_option("--pairs", tr_pairs, "TSV pair file")->required();
    train_cmd->add_option("--vocab", tr_vocab, "Vocabulary file")->required();
    train_cmd->add_option("--out", tr_out, "Output checkpoint path")->required();
    train_cmd->add_option("--nli", tr_nli, "JSONL NLI file (enables the multitask head)");
    train_cmd->add_option("--config", tr_config, "JSON training config (flags override)");
    train_cmd->add_option("--telemetry", tr_telemetry, "JSONL telemetry log path");
    train_cmd->add_option("--init-from", tr_init_from, "Checkpoint to initialize from");
    train_cmd->add_option("--encoder", tr_encoder, "dan|transformer")
        ->check(CLI::IsMember({"dan", "transformer"}));
    train_cmd->add_option("--seed", tr_seed, "RNG seed")->trigger_on_parse()
        ->each([&](const std::string&) { tr_seed_set = true; });
    train_cmd->add_option("--steps", tr_steps, "Total training steps");
    train_cmd->add_option("--switch-step", tr_switch, "Step of the lr/batch-size switch");
    train_cmd->add_option("--batch-size", tr_batch, "Initial batch size");
    train_cmd->add_option("--lr", tr_lr, "Initial learning rate");
    train_cmd->add_option("--nli-fraction", tr_nli_fraction, "Per-step NLI task probability");
    train_cmd->add_option("--checkpoint-every", tr_ckpt_every, "Checkpoint interval in steps");
    train_cmd->add_option("--embed-dim", tr_embed_dim, "Sentence embedding size d");
    train_cmd->add_option("--dan-layers", tr_dan_layers, "Comma-separated DAN layer sizes");
    train_cmd->add_option("--dan-input-dim", tr_dan_input_dim, "DAN input embedding width");
    train_cmd->add_option("--tf-layers", tf_layers, "Transformer layer count");
    train_cmd->add_option("--tf-heads", tf_heads, "Transformer head count");
    train_cmd->add_option("--tf-hidden", tf_hidden, "Transformer hidden size");
    train_cmd->add_option("--tf-filter", tf_filter, "Transformer filter size");

    // eval-response
    auto* eval_resp = app.add_subcommand("eval-response", "P@N response ranking");
    std::string er_ckpt, er_vocab, er_pairs;
    std::size_t er_negatives = 99;
    std::string er_ns = "1,3,10";
    std::uint64_t er_seed = default_seed();
    eval_resp->add_option("--checkpoint", er_ckpt)->required();
    eval_resp->add_option("--vocab", er_vocab)->required();
    eval_resp->add_option("--pairs", er_pairs, "TSV pair file")->required();
    eval_resp->add_option("--negatives", er_negatives, "Negatives per query");
    eval_resp->add_option("--n", er_ns, "Comma-separated N values");
    eval_resp->add_option("--seed", er_seed, "Negative-sampling seed");

    // eval-sts
    auto* eval_sts_cmd = app.add_subcommand("eval-sts", "STS Pearson r");
    std::string es_ckpt, es_vocab, es_data, es_split = "test", es_csv, es_train, es_dev;
    bool es_tune = false;
    std::size_t es_tune_steps = 500;
    eval_sts_cmd->add_option("--checkpoint", es_ckpt)->required();
    eval_sts_cmd->add_option("--vocab", es_vocab)->required();
    eval_sts_cmd->add_option("--data", es_data, "STS TSV file")->required();
    eval_sts_cmd->add_option("--split", es_split, "Split tag for the report");
    eval_sts_cmd->add_flag("--tune-matrix", es_tune, "Fit the adaptation matrix first");
    eval_sts_cmd->add_option("--train", es_train, "STS train TSV (for --tune-matrix)");
    eval_sts_cmd->add_option("--dev", es_dev, "STS dev TSV (for --tune-matrix)");
    eval_sts_cmd->add_option("--tune-steps", es_tune_steps, "Adaptation GD steps");
    eval_sts_cmd->add_option("--emit-csv", es_csv, "Write gold,pred,genre CSV here");

    // eval-cqa
    auto* eval_cqa_cmd = app.add_subcommand("eval-cqa", "CQA question-similarity MAP");
    std::string ec_ckpt, ec_vocab, ec_data;
    bool ec_include_zero = false;
    eval_cqa_cmd->add_option("--checkpoint", ec_ckpt)->required();
    eval_cqa_cmd->add_option("--vocab", ec_vocab)->required();
    eval_cqa_cmd->add_option("--data", ec_data, "CQA JSONL file")->required();
    eval_cqa_cmd->add_flag("--include-zero-good", ec_include_zero,
                           "Count zero-good queries as AP 0");

    // sim
    auto* sim = app.add_subcommand("sim", "Similarity score for two sentences");
    std::string sim_ckpt, sim_vocab, sim_s1, sim_s2;
    bool sim_raw = false;
    sim->add_option("--checkpoint", sim_ckpt)->required();
    sim->add_option("--vocab", sim_vocab)->required();
    sim->add_option("s1", sim_s1, "First sentence")->required();
    sim->add_option("s2", sim_s2, "Second sentence")->required();
    sim->add_flag("--raw", sim_raw, "Also print the raw arccos score");

    // embed
    auto* embed = app.add_subcommand("embed", "Embed one sentence per input line");
    std::string em_ckpt, em_vocab, em_file;
    embed->add_option("--checkpoint", em_ckpt)->required();
    embed->add_option("--vocab", em_vocab)->required();
    embed->add_option("--file", em_file, "Input text file, one sentence per line")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // app.exit prints the message; help/version requests exit cleanly
        return app.exit(e) == 0 ? 0 : kExitUsage;
    }

    try {
        if (*extract) return cmd_extract(comments_path, pairs_out);
        if (*build_vocab) return cmd_build_vocab(bv_pairs, bv_out, bv_min_count, bv_max_size);

        if (*train_cmd) {
            convsim::TrainingConfig tcfg;
            tcfg.total_steps = 20000;
            tcfg.switch_step = 15000;
            if (!tr_config.empty()) {
                std::ifstream in(tr_config);
                if (!in) throw convsim::DataError("cannot read config: " + tr_config);
                std::string blob((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
                tcfg = convsim::training_config_from_json(blob);
            }
            if (tr_steps) tcfg.total_steps = tr_steps;
            if (train_cmd->count("--switch-step")) tcfg.switch_step = tr_switch;
            else if (tr_steps) tcfg.switch_step = tr_steps * 3 / 4;
            if (tr_batch) {
                tcfg.batch_size_initial = tr_batch;
                if (tcfg.batch_size_late < tr_batch) tcfg.batch_size_late = tr_batch * 2;
            }
            if (tr_lr >= 0.0) tcfg.lr_initial = tr_lr;
            if (tr_nli_fraction >= 0.0) tcfg.nli_task_fraction = tr_nli_fraction;
            if (tr_seed_set || std::getenv("CONVSIM_SEED")) tcfg.seed = tr_seed;
            if (tr_ckpt_every) tcfg.checkpoint_every = tr_ckpt_every;

            Vocabulary vocab = Vocabulary::load(tr_vocab);
            convsim::DualModelConfig mcfg;
            mcfg.encoder.kind = tr_encoder == "transformer" ? convsim::EncoderKind::Transformer
                                                            : convsim::EncoderKind::Dan;
            mcfg.encoder.word_vocab_size = vocab.word_table_size();
            mcfg.encoder.bigram_vocab_size = vocab.bigram_table_size();
            if (!tr_dan_layers.empty()) {
                mcfg.encoder.dan.hidden_layers = parse_layer_list(tr_dan_layers);
            }
            if (tr_dan_input_dim) mcfg.encoder.dan.input_dim = tr_dan_input_dim;
            if (tf_layers) mcfg.encoder.transformer.layers = tf_layers;
            if (tf_heads) mcfg.encoder.transformer.heads = tf_heads;
            if (tf_hidden) mcfg.encoder.transformer.hidden = tf_hidden;
            if (tf_filter) mcfg.encoder.transformer.filter = tf_filter;
            if (tr_embed_dim) {
                mcfg.encoder.dan.hidden_layers.back() = tr_embed_dim;
                mcfg.encoder.transformer.output_dim = tr_embed_dim;
            }

            bool use_bigrams = mcfg.encoder.kind == convsim::EncoderKind::Dan;
            auto raw_pairs = convsim::load_pairs_tsv(tr_pairs);
            std::vector<std::pair<FeatureSequence, FeatureSequence>> pairs;
            pairs.reserve(raw_pairs.size());
            for (const auto& p : raw_pairs) {
                auto a = convsim::featurize(convsim::normalize_tokenize(p.input_text), vocab,
                                            use_bigrams);
                auto b = convsim::featurize(convsim::normalize_tokenize(p.response_text),
                                            vocab, use_bigrams);
                if (a.word_ids.empty() || b.word_ids.empty()) continue;
                pairs.emplace_back(std::move(a), std::move(b));
            }

            std::vector<convsim::NliPair> nli;
            if (!tr_nli.empty()) {
                for (const auto& e : convsim::load_nli(tr_nli)) {
                    convsim::NliPair p;
                    p.premise = convsim::featurize(convsim::normalize_tokenize(e.premise),
                                                   vocab, use_bigrams);
                    p.hypothesis = convsim::featurize(
                        convsim::normalize_tokenize(e.hypothesis), vocab, use_bigrams);
                    p.label = e.label;
                    if (p.premise.word_ids.empty() || p.hypothesis.word_ids.empty()) continue;
                    nli.push_back(std::move(p));
                }
                mcfg.with_nli_head = !nli.empty();
            }

            ParameterStore store(tcfg.seed);
            if (!tr_init_from.empty()) {
                convsim::load_model_checkpoint(tr_init_from, store);
            }
            DualModel model(mcfg);

            std::ofstream telemetry;
            if (!tr_telemetry.empty()) {
                telemetry.open(tr_telemetry, std::ios::binary);
                if (!telemetry) {
                    throw convsim::DataError("cannot write telemetry: " + tr_telemetry);
                }
                // full reproducibility record: every resolved value in the header
                json header;
                header["config"] = json::parse(convsim::training_config_to_json(tcfg));
                header["model"] = json::parse(convsim::dual_model_config_to_json(mcfg));
                header["vocab"] = tr_vocab;
                header["pairs"] = tr_pairs;
                header["nli"] = tr_nli;
                header["init_from"] = tr_init_from;
                telemetry << header.dump() << "\n";
            }

            std::size_t ckpt_index = 0;
            convsim::StepCallback on_step;
            if (tcfg.checkpoint_every > 0) {
                on_step = [&](const convsim::StepRecord& rec) {
                    if ((rec.step + 1) % tcfg.checkpoint_every == 0 &&
                        rec.step + 1 < tcfg.total_steps) {
                        convsim::CheckpointMeta meta{rec.step + 1, mcfg, tcfg, tr_vocab};
                        convsim::save_model_checkpoint(
                            tr_out + ".step" + std::to_string(rec.step + 1), store, meta);
                        ++ckpt_index;
                    }
                };
            }

            auto result = convsim::train(tcfg, model, pairs, nli, store,
                                         tr_telemetry.empty() ? nullptr : &telemetry, on_step);
            convsim::CheckpointMeta meta{tcfg.total_steps, mcfg, tcfg, tr_vocab};
            convsim::save_model_checkpoint(tr_out, store, meta);

            json j;
            j["steps"] = result.steps_run;
            j["nli_steps"] = result.nli_steps;
            j["final_loss"] = result.losses.empty() ? 0.0 : result.losses.back();
            j["checkpoint"] = tr_out;
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (*eval_resp) {
            auto lm = load_model(er_ckpt, er_vocab);
            auto raw_pairs = convsim::load_pairs_tsv(er_pairs);
            std::vector<std::vector<double>> u, vp;
            for (const auto& p : raw_pairs) {
                auto fa = featurize_sentence(lm, p.input_text);
                auto fb = featurize_sentence(lm, p.response_text);
                if (fa.word_ids.empty() || fb.word_ids.empty()) continue;
                convsim::Graph g;
                auto* un = lm.model->encode(g, lm.store, fa);
                auto* vn = lm.model->embed_response(g, lm.store, lm.model->encode(g, lm.store, fb));
                u.emplace_back(un->value.data().begin(), un->value.data().end());
                vp.emplace_back(vn->value.data().begin(), vn->value.data().end());
            }
            auto scorer = [&](std::size_t i, std::size_t j) {
                double s = 0.0;
                for (std::size_t k = 0; k < u[i].size(); ++k) s += u[i][k] * vp[j][k];
                return s;
            };
            std::vector<std::size_t> ns;
            for (std::size_t n : parse_layer_list(er_ns)) ns.push_back(n);
            auto result = convsim::precision_at_n(scorer, u.size(), er_negatives, ns, er_seed);
            json out = json::array();
            for (const auto& [n, v] : result.value) {
                out.push_back({{"metric", "P@" + std::to_string(n)},
                               {"split", er_pairs},
                               {"genre", "all"},
                               {"value", v}});
            }
            std::cout << out.dump(2) << "\n";
            return 0;
        }

        if (*eval_sts_cmd) {
            auto lm = load_model(es_ckpt, es_vocab);
            auto embed_examples = [&](const std::string& path, const std::string& split) {
                std::vector<convsim::EmbeddedStsExample> out;
                for (const auto& e : convsim::load_sts(path, split)) {
                    auto f1 = featurize_sentence(lm, e.sentence1);
                    auto f2 = featurize_sentence(lm, e.sentence2);
                    if (f1.word_ids.empty() || f2.word_ids.empty()) continue;
                    convsim::EmbeddedStsExample ee;
                    ee.u = lm.model->embed_sentence(lm.store, f1);
                    ee.v = lm.model->embed_sentence(lm.store, f2);
                    ee.gold = e.gold;
                    ee.genre = e.genre;
                    out.push_back(std::move(ee));
                }
                return out;
            };
            auto examples = embed_examples(es_data, es_split);
            std::optional<convsim::AdaptationMatrix> matrix;
            if (es_tune) {
                if (es_train.empty() || es_dev.empty()) {
                    std::cerr << "--tune-matrix requires --train and --dev\n";
                    return kExitUsage;
                }
                convsim::AdaptationOptions opts;
                opts.steps = es_tune_steps;
                matrix = convsim::fit_adaptation(embed_examples(es_train, "train"),
                                                 embed_examples(es_dev, "dev"), opts);
            }
            auto report = convsim::eval_sts(examples, matrix ? &*matrix : nullptr);
            if (!es_csv.empty()) convsim::write_sts_csv(es_csv, report);
            json out = json::array();
            out.push_back({{"metric", "pearson_r"},
                           {"split", es_split},
                           {"genre", "all"},
                           {"value", report.overall_r}});
            for (const auto& [genre, r] : report.genre_r) {
                out.push_back({{"metric", "pearson_r"},
                               {"split", es_split},
                               {"genre", genre},
                               {"value", r}});
            }
            std::cout << out.dump(2) << "\n";
            return 0;
        }

        if (*eval_cqa_cmd) {
            auto lm = load_model(ec_ckpt, ec_vocab);
            std::vector<convsim::EmbeddedCqaQuery> queries;
            for (const auto& q : convsim::load_cqa(ec_data)) {
                auto fo = featurize_sentence(lm, q.original);
                if (fo.word_ids.empty()) continue;
                convsim::EmbeddedCqaQuery eq;
                eq.original = lm.model->embed_sentence(lm.store, fo);
                bool ok = true;
                for (const auto& c : q.candidates) {
                    auto fc = featurize_sentence(lm, c.text);
                    if (fc.word_ids.empty()) {
                        ok = false;
                        break;
                    }
                    eq.candidates.push_back(lm.model->embed_sentence(lm.store, fc));
                    eq.good.push_back(c.relevance != convsim::CqaRelevance::Irrelevant);
                }
                if (ok) queries.push_back(std::move(eq));
            }
            auto result = convsim::eval_cqa(queries, ec_include_zero);
            json out = json::array();
            out.push_back({{"metric", "MAP"},
                           {"split", ec_data},
                           {"genre", "all"},
                           {"value", result.map}});
            std::cout << out.dump(2) << "\n";
            return 0;
        }

        if (*sim) {
            auto lm = load_model(sim_ckpt, sim_vocab);
            auto f1 = featurize_sentence(lm, sim_s1);
            auto f2 = featurize_sentence(lm, sim_s2);
            if (f1.word_ids.empty() || f2.word_ids.empty()) {
                throw convsim::DataError("empty_input: sentence produced no tokens");
            }
            auto u = lm.model->embed_sentence(lm.store, f1);
            auto v = lm.model->embed_sentence(lm.store, f2);
            json j;
            j["score"] = convsim::sts_score_scaled(u, v);
            if (sim_raw) j["raw"] = convsim::sts_score_raw(u, v);
            std::cout << j.dump(2) << "\n";
            return 0;
        }

        if (*embed) {
            auto lm = load_model(em_ckpt, em_vocab);
            std::ifstream in(em_file, std::ios::binary);
            if (!in) throw convsim::DataError("cannot read file: " + em_file);
            std::string line;
            std::cout.precision(9);
            while (std::getline(in, line)) {
                auto f = featurize_sentence(lm, line);
                if (f.word_ids.empty()) {
                    throw convsim::DataError("empty_input: line produced no tokens");
                }
                auto u = lm.model->embed_sentence(lm.store, f);
                for (std::size_t i = 0; i < u.size(); ++i) {
                    if (i) std::cout << " ";
                    std::cout << u[i];
                }
                std::cout << "\n";
            }
            return 0;
        }
    } catch (const convsim::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const convsim::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return 0;
}
