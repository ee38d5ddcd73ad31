#include "convsim/dual_model.hpp"

#include <nlohmann/json.hpp>

namespace convsim {

using nlohmann::json;

std::string dual_model_config_to_json(const DualModelConfig& cfg) {
    json j;
    j["encoder"]["kind"] = cfg.encoder.kind == EncoderKind::Dan ? "dan" : "transformer";
    j["encoder"]["word_vocab_size"] = cfg.encoder.word_vocab_size;
    j["encoder"]["bigram_vocab_size"] = cfg.encoder.bigram_vocab_size;
    j["encoder"]["dan"]["input_dim"] = cfg.encoder.dan.input_dim;
    j["encoder"]["dan"]["hidden_layers"] = cfg.encoder.dan.hidden_layers;
    j["encoder"]["transformer"]["layers"] = cfg.encoder.transformer.layers;
    j["encoder"]["transformer"]["heads"] = cfg.encoder.transformer.heads;
    j["encoder"]["transformer"]["hidden"] = cfg.encoder.transformer.hidden;
    j["encoder"]["transformer"]["filter"] = cfg.encoder.transformer.filter;
    j["encoder"]["transformer"]["output_dim"] = cfg.encoder.transformer.output_dim;
    j["response_dnn"]["hidden_layers"] = cfg.response_dnn.hidden_layers;
    j["nli"]["hidden"] = cfg.nli.hidden;
    j["nli"]["classes"] = cfg.nli.classes;
    j["with_nli_head"] = cfg.with_nli_head;
    return j.dump();
}

DualModelConfig dual_model_config_from_json(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw DataError("malformed model config JSON");
    DualModelConfig cfg;
    const json& e = j.at("encoder");
    std::string kind = e.at("kind").get<std::string>();
    if (kind == "dan") {
        cfg.encoder.kind = EncoderKind::Dan;
    } else if (kind == "transformer") {
        cfg.encoder.kind = EncoderKind::Transformer;
    } else {
        throw DataError("unknown encoder kind: " + kind);
    }
    cfg.encoder.word_vocab_size = e.at("word_vocab_size").get<std::size_t>();
    cfg.encoder.bigram_vocab_size = e.at("bigram_vocab_size").get<std::size_t>();
    cfg.encoder.dan.input_dim = e.at("dan").at("input_dim").get<std::size_t>();
    cfg.encoder.dan.hidden_layers =
        e.at("dan").at("hidden_layers").get<std::vector<std::size_t>>();
    const json& t = e.at("transformer");
    cfg.encoder.transformer.layers = t.at("layers").get<std::size_t>();
    cfg.encoder.transformer.heads = t.at("heads").get<std::size_t>();
    cfg.encoder.transformer.hidden = t.at("hidden").get<std::size_t>();
    cfg.encoder.transformer.filter = t.at("filter").get<std::size_t>();
    cfg.encoder.transformer.output_dim = t.at("output_dim").get<std::size_t>();
    cfg.response_dnn.hidden_layers =
        j.at("response_dnn").at("hidden_layers").get<std::vector<std::size_t>>();
    cfg.nli.hidden = j.at("nli").at("hidden").get<std::size_t>();
    cfg.nli.classes = j.at("nli").at("classes").get<std::size_t>();
    cfg.with_nli_head = j.value("with_nli_head", false);
    return cfg;
}

DualModel::DualModel(DualModelConfig cfg) : cfg_(std::move(cfg)), encoder_(cfg_.encoder) {}

void DualModel::register_params(ParameterStore& store) const {
    encoder_.register_params(store);
    std::size_t d = embed_dim();
    std::size_t in = d;
    for (std::size_t l = 0; l < cfg_.response_dnn.hidden_layers.size(); ++l) {
        std::size_t outw = cfg_.response_dnn.hidden_layers[l];
        std::string p = "resp.l" + std::to_string(l);
        store.get_or_create(p + ".W", {in, outw}, Init::GlorotUniform);
        store.get_or_create(p + ".b", {1, outw}, Init::Zero);
        in = outw;
    }
    std::string fin = "resp.l" + std::to_string(cfg_.response_dnn.hidden_layers.size());
    store.get_or_create(fin + ".W", {in, d}, Init::GlorotUniform);
    store.get_or_create(fin + ".b", {1, d}, Init::Zero);

    if (cfg_.with_nli_head) {
        store.get_or_create("nli.l0.W", {4 * d, cfg_.nli.hidden}, Init::GlorotUniform);
        store.get_or_create("nli.l0.b", {1, cfg_.nli.hidden}, Init::Zero);
        store.get_or_create("nli.l1.W", {cfg_.nli.hidden, cfg_.nli.classes},
                            Init::GlorotUniform);
        store.get_or_create("nli.l1.b", {1, cfg_.nli.classes}, Init::Zero);
    }
}

Graph::Ref DualModel::embed_response(Graph& g, ParameterStore& store, Graph::Ref v) const {
    Graph::Ref x = v;
    for (std::size_t l = 0; l < cfg_.response_dnn.hidden_layers.size(); ++l) {
        std::string p = "resp.l" + std::to_string(l);
        x = g.tanh_op(g.affine(x, g.param(store, p + ".W"), g.param(store, p + ".b")));
    }
    std::string fin = "resp.l" + std::to_string(cfg_.response_dnn.hidden_layers.size());
    return g.affine(x, g.param(store, fin + ".W"), g.param(store, fin + ".b"));
}

Graph::Ref DualModel::score_batch(Graph& g, ParameterStore& store,
                                  std::span<const FeatureSequence> inputs,
                                  std::span<const FeatureSequence> responses) const {
    if (inputs.size() != responses.size() || inputs.empty()) {
        throw Error("score_batch: inputs and responses must be equal-length and nonempty");
    }
    std::vector<Graph::Ref> u_rows, v_rows;
    u_rows.reserve(inputs.size());
    v_rows.reserve(responses.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        try {
            u_rows.push_back(encode(g, store, inputs[i]));
            v_rows.push_back(embed_response(g, store, encode(g, store, responses[i])));
        } catch (const Error& e) {
            throw Error("score_batch: pair " + std::to_string(i) + ": " + e.what());
        }
    }
    Graph::Ref u = g.concat_rows(u_rows);         // K x d
    Graph::Ref vp = g.concat_rows(v_rows);        // K x d
    return g.matmul(u, g.transpose(vp));          // K x K
}

Graph::Ref DualModel::response_loss(Graph& g, Graph::Ref scores) {
    const std::size_t k = scores->value.rows();
    if (k < 2 || scores->value.cols() != k) {
        throw ShapeError("response_loss: need a square KxK score matrix with K >= 2");
    }
    std::vector<std::int32_t> targets(k);
    for (std::size_t i = 0; i < k; ++i) targets[i] = static_cast<std::int32_t>(i);
    return g.softmax_xent(scores, targets);
}

Graph::Ref DualModel::nli_features(Graph& g, Graph::Ref u1, Graph::Ref u2) {
    return g.concat_cols({u1, u2, g.abs_op(g.sub(u1, u2)), g.mul(u1, u2)});
}

Graph::Ref DualModel::nli_logits(Graph& g, ParameterStore& store, Graph::Ref features) const {
    Graph::Ref h = g.tanh_op(
        g.affine(features, g.param(store, "nli.l0.W"), g.param(store, "nli.l0.b")));
    return g.affine(h, g.param(store, "nli.l1.W"), g.param(store, "nli.l1.b"));
}

DualModel::NliBatchResult DualModel::nli_loss(Graph& g, ParameterStore& store,
                                              std::span<const NliPair> pairs) const {
    if (pairs.empty()) throw Error("nli_loss: empty batch");
    std::vector<Graph::Ref> rows;
    std::vector<std::int32_t> targets;
    rows.reserve(pairs.size());
    targets.reserve(pairs.size());
    for (const NliPair& p : pairs) {
        Graph::Ref u1 = encode(g, store, p.premise);
        Graph::Ref u2 = encode(g, store, p.hypothesis);
        rows.push_back(nli_features(g, u1, u2));
        targets.push_back(static_cast<std::int32_t>(p.label));
    }
    Graph::Ref logits = nli_logits(g, store, g.concat_rows(rows));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < cfg_.nli.classes; ++c) {
            if (logits->value.at(i, c) > logits->value.at(i, best)) best = c;
        }
        if (best == static_cast<std::size_t>(targets[i])) ++correct;
    }
    NliBatchResult result;
    result.loss = g.softmax_xent(logits, targets);
    result.accuracy = static_cast<double>(correct) / static_cast<double>(pairs.size());
    return result;
}

double DualModel::score_pair(ParameterStore& store, const FeatureSequence& input,
                             const FeatureSequence& response) const {
    Graph g;
    Graph::Ref u = encode(g, store, input);
    Graph::Ref vp = embed_response(g, store, encode(g, store, response));
    Graph::Ref s = g.matmul(u, g.transpose(vp));
    return s->value[0];
}

std::vector<double> DualModel::embed_sentence(ParameterStore& store,
                                              const FeatureSequence& f) const {
    Graph g;
    Graph::Ref u = encode(g, store, f);
    return std::vector<double>(u->value.data().begin(), u->value.data().end());
}

}  // namespace convsim
