#include "convsim/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace convsim {

namespace {

double norm(std::span<const double> v) {
    double sq = 0.0;
    for (double x : v) sq += x * x;
    return std::sqrt(sq);
}

double clamped_cosine(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw ShapeError("cosine: dimension mismatch");
    double nu = norm(u), nv = norm(v);
    if (nu <= 1e-12 || nv <= 1e-12) throw NumericError("degenerate_norm: zero vector");
    double dot = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) dot += u[i] * v[i];
    return std::clamp(dot / (nu * nv), -1.0, 1.0);
}

}  // namespace

double cosine_similarity(std::span<const double> u, std::span<const double> v) {
    return clamped_cosine(u, v);
}

double sts_score_raw(std::span<const double> u, std::span<const double> v) {
    return -std::acos(clamped_cosine(u, v));
}

double sts_score_scaled(std::span<const double> u, std::span<const double> v) {
    return 5.0 * (1.0 - std::acos(clamped_cosine(u, v)) / M_PI);
}

double pearson_r(std::span<const double> preds, std::span<const double> golds) {
    if (preds.size() != golds.size()) throw ShapeError("pearson_r: length mismatch");
    const std::size_t n = preds.size();
    if (n < 2) throw NumericError("undefined_correlation: need at least two points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += preds[i];
        my += golds[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double dx = preds[i] - mx, dy = golds[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) {
        throw NumericError("undefined_correlation: zero variance input");
    }
    return sxy / std::sqrt(sxx * syy);
}

PrecisionAtN precision_at_n(const PairScorer& score, std::size_t n_pairs,
                            std::size_t num_negatives, std::span<const std::size_t> n_values,
                            std::uint64_t seed) {
    if (n_pairs < num_negatives + 1) {
        throw Error("precision_at_n: pool of " + std::to_string(n_pairs) +
                    " is too small for " + std::to_string(num_negatives) + " negatives");
    }
    PrecisionAtN result;
    std::map<std::size_t, std::size_t> hits;
    for (std::size_t n : n_values) hits[n] = 0;

    for (std::size_t i = 0; i < n_pairs; ++i) {
        Rng rng(seed ^ (0x70406e5ULL * (i + 1)));
        // distinct negatives, excluding the true response
        std::vector<bool> taken(n_pairs, false);
        taken[i] = true;
        std::size_t sampled = 0;
        double positive = score(i, i);
        std::size_t beaten_by = 0;
        while (sampled < num_negatives) {
            std::size_t j = rng.index(n_pairs);
            if (taken[j]) continue;
            taken[j] = true;
            ++sampled;
            if (score(i, j) >= positive) ++beaten_by;  // ties against the positive
        }
        std::size_t rank = beaten_by + 1;
        for (auto& [n, h] : hits) {
            if (rank <= n) ++h;
        }
    }
    for (const auto& [n, h] : hits) {
        result.value[n] = static_cast<double>(h) / static_cast<double>(n_pairs);
    }
    return result;
}

AdaptationMatrix AdaptationMatrix::identity(std::size_t d) {
    Tensor m({d, d});
    for (std::size_t i = 0; i < d; ++i) m.at(i, i) = 1.0;
    return AdaptationMatrix{std::move(m)};
}

namespace {

std::vector<double> apply_matrix(const Tensor& m, std::span<const double> v) {
    const std::size_t d = m.rows();
    if (m.cols() != v.size()) throw ShapeError("adaptation matrix dimension mismatch");
    std::vector<double> out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += m.at(i, j) * v[j];
        out[i] = s;
    }
    return out;
}

Tensor stack_embeddings(const std::vector<EmbeddedStsExample>& examples, bool first) {
    const std::size_t n = examples.size();
    const std::size_t d = examples[0].u.size();
    Tensor out({n, d});
    for (std::size_t i = 0; i < n; ++i) {
        const auto& e = first ? examples[i].u : examples[i].v;
        if (e.size() != d) throw ShapeError("inconsistent embedding dimensions");
        for (std::size_t j = 0; j < d; ++j) out.at(i, j) = e[j];
    }
    return out;
}

// Differentiable batch of scaled scores for rows of X = U M^T, Y = V M^T.
Graph::Ref scaled_scores_node(Graph& g, Graph::Ref u, Graph::Ref v, Graph::Ref m) {
    Graph::Ref mt = g.transpose(m);
    Graph::Ref x = g.matmul(u, mt);
    Graph::Ref y = g.matmul(v, mt);
    Graph::Ref dots = g.rowwise_sum(g.mul(x, y));
    Graph::Ref nx = g.sqrt_eps(g.rowwise_sum(g.mul(x, x)));
    Graph::Ref ny = g.sqrt_eps(g.rowwise_sum(g.mul(y, y)));
    Graph::Ref cos = g.div(dots, g.mul(nx, ny));
    return g.add_const(g.scale(g.arccos_clamped(cos), -5.0 / M_PI), 5.0);
}

double dev_pearson(const std::vector<EmbeddedStsExample>& dev, const Tensor& m) {
    std::vector<double> preds, golds;
    preds.reserve(dev.size());
    golds.reserve(dev.size());
    for (const auto& e : dev) {
        preds.push_back(sts_score_scaled(apply_matrix(m, e.u), apply_matrix(m, e.v)));
        golds.push_back(e.gold);
    }
    return pearson_r(preds, golds);
}

}  // namespace

AdaptationMatrix fit_adaptation(const std::vector<EmbeddedStsExample>& train,
                                const std::vector<EmbeddedStsExample>& dev,
                                const AdaptationOptions& opts) {
    if (train.empty() || dev.empty()) {
        throw Error("fit_adaptation: train and dev sets must be nonempty");
    }
    const std::size_t d = train[0].u.size();
    ParameterStore store(0);
    store.get_or_create("adapt.M", {d, d}, Init::Identity);

    Tensor u_train = stack_embeddings(train, true);
    Tensor v_train = stack_embeddings(train, false);
    Tensor gold({train.size(), 1});
    for (std::size_t i = 0; i < train.size(); ++i) gold[i] = train[i].gold;

    double best_r = dev_pearson(dev, store.at("adapt.M").value);
    Tensor best_m = store.at("adapt.M").value;
    std::size_t evals_since_best = 0;

    for (std::size_t step = 0; step < opts.steps; ++step) {
        Graph g;
        Graph::Ref m = g.param(store, "adapt.M");
        Graph::Ref preds =
            scaled_scores_node(g, g.input(u_train), g.input(v_train), m);
        Graph::Ref err = g.sub(preds, g.input(gold));
        Graph::Ref loss = g.mean_all(g.mul(err, err));
        store.zero_grads();
        g.backward(loss);
        sgd_step(store, opts.lr, opts.clip_norm);

        if ((step + 1) % opts.eval_every == 0 || step + 1 == opts.steps) {
            double r = dev_pearson(dev, store.at("adapt.M").value);
            if (r > best_r) {
                best_r = r;
                best_m = store.at("adapt.M").value;
                evals_since_best = 0;
            } else if (++evals_since_best * opts.eval_every >= opts.patience) {
                break;
            }
        }
    }
    return AdaptationMatrix{std::move(best_m)};
}

StsReport eval_sts(const std::vector<EmbeddedStsExample>& examples,
                   const AdaptationMatrix* m) {
    if (examples.empty()) throw Error("eval_sts: empty dataset");
    StsReport report;
    std::vector<double> preds, golds;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> by_genre;
    for (const auto& e : examples) {
        double pred;
        if (m) {
            pred = sts_score_scaled(apply_matrix(m->m, e.u), apply_matrix(m->m, e.v));
        } else {
            pred = sts_score_scaled(e.u, e.v);
        }
        std::string genre = sts_genre_name(e.genre);
        preds.push_back(pred);
        golds.push_back(e.gold);
        by_genre[genre].first.push_back(pred);
        by_genre[genre].second.push_back(e.gold);
        report.rows.emplace_back(e.gold, pred, genre);
    }
    report.overall_r = pearson_r(preds, golds);
    for (const auto& [genre, pg] : by_genre) {
        report.genre_n[genre] = pg.first.size();
        report.genre_r[genre] = pearson_r(pg.first, pg.second);
    }
    return report;
}

void write_sts_csv(const std::filesystem::path& path, const StsReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write CSV: " + path.string());
    out << "gold,pred,genre\n";
    out.precision(17);
    for (const auto& [gold, pred, genre] : report.rows) {
        out << gold << "," << pred << "," << genre << "\n";
    }
    if (!out) throw DataError("write failure: " + path.string());
}

double average_precision(const std::vector<bool>& good_by_rank) {
    std::size_t good_seen = 0;
    double sum = 0.0;
    for (std::size_t k = 0; k < good_by_rank.size(); ++k) {
        if (good_by_rank[k]) {
            ++good_seen;
            sum += static_cast<double>(good_seen) / static_cast<double>(k + 1);
        }
    }
    if (good_seen == 0) return 0.0;
    return sum / static_cast<double>(good_seen);
}

CqaResult eval_cqa(const std::vector<EmbeddedCqaQuery>& queries, bool include_zero_good) {
    if (queries.empty()) throw Error("eval_cqa: empty query set");
    CqaResult result;
    double ap_sum = 0.0;
    for (const auto& q : queries) {
        bool any_good = std::find(q.good.begin(), q.good.end(), true) != q.good.end();
        if (!any_good && !include_zero_good) {
            ++result.queries_skipped;
            continue;
        }
        std::vector<std::pair<double, std::size_t>> scored;
        scored.reserve(q.candidates.size());
        for (std::size_t i = 0; i < q.candidates.size(); ++i) {
            scored.emplace_back(cosine_similarity(q.original, q.candidates[i]), i);
        }
        // descending score; stable on the original candidate index
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<bool> good_by_rank;
        good_by_rank.reserve(scored.size());
        for (const auto& [s, i] : scored) good_by_rank.push_back(q.good[i]);
        ap_sum += average_precision(good_by_rank);
        ++result.queries_scored;
    }
    if (result.queries_scored == 0) {
        throw NumericError("eval_cqa: no queries with relevant candidates");
    }
    result.map = 100.0 * ap_sum / static_cast<double>(result.queries_scored);
    return result;
}

}  // namespace convsim
