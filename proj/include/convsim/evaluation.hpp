#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convsim/corpus.hpp"
#include "convsim/graph.hpp"

namespace convsim {

// Eq.-style similarity scores. The cosine is clamped to [-1, 1] before
// arccos.
double sts_score_raw(std::span<const double> u, std::span<const double> v);     // [-pi, 0]
double sts_score_scaled(std::span<const double> u, std::span<const double> v);  // [0, 5]
double cosine_similarity(std::span<const double> u, std::span<const double> v);

// Sample Pearson correlation, two-pass. Throws undefined_correlation when
// either side has zero variance or n < 2.
double pearson_r(std::span<const double> preds, std::span<const double> golds);

// --- Response ranking -------------------------------------------------------

// score(input_index, response_index); the positive for input i is response i.
using PairScorer = std::function<double(std::size_t, std::size_t)>;

struct PrecisionAtN {
    std::map<std::size_t, double> value;  // N -> P@N
};

// For every input, ranks the true response against `num_negatives` distinct
// seeded-sampled negatives; ties rank against the positive.
PrecisionAtN precision_at_n(const PairScorer& score, std::size_t n_pairs,
                            std::size_t num_negatives, std::span<const std::size_t> n_values,
                            std::uint64_t seed);

// --- STS --------------------------------------------------------------------

struct EmbeddedStsExample {
    std::vector<double> u;
    std::vector<double> v;
    double gold = 0.0;
    StsGenre genre = StsGenre::Captions;
};

// d x d linear transform applied to both sentence embeddings before scoring.
struct AdaptationMatrix {
    Tensor m;
    static AdaptationMatrix identity(std::size_t d);
};

struct AdaptationOptions {
    double lr = 0.05;
    std::size_t steps = 500;
    std::size_t patience = 50;   // early stopping on dev Pearson r
    std::size_t eval_every = 10;
    double clip_norm = 5.0;
};

// Gradient descent on MSE between the scaled score of (Mu, Mv) and gold over
// the train split, identity init, best-dev selection.
AdaptationMatrix fit_adaptation(const std::vector<EmbeddedStsExample>& train,
                                const std::vector<EmbeddedStsExample>& dev,
                                const AdaptationOptions& opts = {});

struct StsReport {
    double overall_r = 0.0;
    std::map<std::string, double> genre_r;          // only genres present
    std::map<std::string, std::size_t> genre_n;
    std::vector<std::tuple<double, double, std::string>> rows;  // gold, pred, genre
};

StsReport eval_sts(const std::vector<EmbeddedStsExample>& examples,
                   const AdaptationMatrix* m = nullptr);

// CSV with header gold,pred,genre.
void write_sts_csv(const std::filesystem::path& path, const StsReport& report);

// --- CQA --------------------------------------------------------------------

struct EmbeddedCqaQuery {
    std::vector<double> original;
    std::vector<std::vector<double>> candidates;
    std::vector<bool> good;  // PerfectMatch or Relevant
};

struct CqaResult {
    double map = 0.0;  // mean AP x 100
    std::size_t queries_scored = 0;
    std::size_t queries_skipped = 0;  // zero good candidates
};

// Candidates ranked by cosine to the original, ties keeping original order.
// Queries without good candidates are excluded unless include_zero_good.
CqaResult eval_cqa(const std::vector<EmbeddedCqaQuery>& queries,
                   bool include_zero_good = false);

// AP of a ranked good/bad list; exposed for the metric oracle tests.
double average_precision(const std::vector<bool>& good_by_rank);

}  // namespace convsim
