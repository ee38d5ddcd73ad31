#include "convsim/encoders.hpp"

#include <cmath>

namespace convsim {

Tensor timing_signal(std::size_t length, std::size_t dim) {
    Tensor out({length, dim});
    for (std::size_t pos = 0; pos < length; ++pos) {
        for (std::size_t j = 0; j < dim; ++j) {
            std::size_t pair = j / 2;
            double freq = std::pow(10000.0, 2.0 * static_cast<double>(pair) /
                                                 static_cast<double>(dim));
            double angle = static_cast<double>(pos) / freq;
            out.at(pos, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return out;
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.word_vocab_size < 2) throw Error("encoder: word vocabulary not set");
    if (cfg_.kind == EncoderKind::Dan) {
        if (cfg_.dan.hidden_layers.empty()) throw Error("encoder: empty DAN layer list");
        if (cfg_.bigram_vocab_size < 2) throw Error("encoder: bigram vocabulary not set");
    } else {
        if (cfg_.transformer.hidden % cfg_.transformer.heads != 0) {
            throw Error("encoder: hidden size must be divisible by head count");
        }
    }
}

void Encoder::register_params(ParameterStore& store) const {
    if (cfg_.kind == EncoderKind::Dan) {
        store.get_or_create("enc.word_emb", {cfg_.word_vocab_size, cfg_.dan.input_dim},
                            Init::NormalEmbedding);
        store.get_or_create("enc.bigram_emb", {cfg_.bigram_vocab_size, cfg_.dan.input_dim},
                            Init::NormalEmbedding);
        std::size_t in = cfg_.dan.input_dim;
        for (std::size_t l = 0; l < cfg_.dan.hidden_layers.size(); ++l) {
            std::size_t outw = cfg_.dan.hidden_layers[l];
            std::string prefix = "enc.dan.l" + std::to_string(l);
            store.get_or_create(prefix + ".W", {in, outw}, Init::GlorotUniform);
            store.get_or_create(prefix + ".b", {1, outw}, Init::Zero);
            in = outw;
        }
        return;
    }
    const TransformerConfig& t = cfg_.transformer;
    store.get_or_create("enc.word_emb", {cfg_.word_vocab_size, t.hidden},
                        Init::NormalEmbedding);
    for (std::size_t l = 0; l < t.layers; ++l) {
        std::string p = "enc.tf.l" + std::to_string(l);
        store.get_or_create(p + ".wq", {t.hidden, t.hidden}, Init::GlorotUniform);
        store.get_or_create(p + ".wk", {t.hidden, t.hidden}, Init::GlorotUniform);
        store.get_or_create(p + ".wv", {t.hidden, t.hidden}, Init::GlorotUniform);
        store.get_or_create(p + ".wo", {t.hidden, t.hidden}, Init::GlorotUniform);
        store.get_or_create(p + ".ln1.g", {1, t.hidden}, Init::One);
        store.get_or_create(p + ".ln1.b", {1, t.hidden}, Init::Zero);
        store.get_or_create(p + ".ffn.W1", {t.hidden, t.filter}, Init::GlorotUniform);
        store.get_or_create(p + ".ffn.b1", {1, t.filter}, Init::Zero);
        store.get_or_create(p + ".ffn.W2", {t.filter, t.hidden}, Init::GlorotUniform);
        store.get_or_create(p + ".ffn.b2", {1, t.hidden}, Init::Zero);
        store.get_or_create(p + ".ln2.g", {1, t.hidden}, Init::One);
        store.get_or_create(p + ".ln2.b", {1, t.hidden}, Init::Zero);
    }
    store.get_or_create("enc.tf.proj.W", {t.hidden, t.output_dim}, Init::GlorotUniform);
    store.get_or_create("enc.tf.proj.b", {1, t.output_dim}, Init::Zero);
}

Graph::Ref Encoder::dan_combine(Graph& g, ParameterStore& store,
                                const FeatureSequence& features) const {
    if (features.word_ids.empty()) throw Error("empty_input: cannot encode empty sequence");
    Graph::Ref words = g.embed_bag(g.param(store, "enc.word_emb"), features.word_ids);
    Graph::Ref sum = words;
    if (!features.bigram_ids.empty()) {
        Graph::Ref bigrams =
            g.embed_bag(g.param(store, "enc.bigram_emb"), features.bigram_ids);
        sum = g.add(words, bigrams);
    }
    // sqrt(n) over word-token count, not words+bigrams
    double n = static_cast<double>(features.word_ids.size());
    return g.scale(sum, 1.0 / std::sqrt(n));
}

Graph::Ref Encoder::encode_dan(Graph& g, ParameterStore& store,
                               const FeatureSequence& features) const {
    Graph::Ref x = dan_combine(g, store, features);
    for (std::size_t l = 0; l < cfg_.dan.hidden_layers.size(); ++l) {
        std::string prefix = "enc.dan.l" + std::to_string(l);
        x = g.tanh_op(g.affine(x, g.param(store, prefix + ".W"),
                               g.param(store, prefix + ".b")));
    }
    return g.l2_normalize_rows(x);
}

Graph::Ref Encoder::self_attention_block(Graph& g, ParameterStore& store, Graph::Ref x,
                                         std::size_t layer,
                                         std::vector<Graph::Ref>* attention_out) const {
    const TransformerConfig& t = cfg_.transformer;
    const std::string p = "enc.tf.l" + std::to_string(layer);
    const std::size_t head_dim = t.hidden / t.heads;

    Graph::Ref q = g.matmul(x, g.param(store, p + ".wq"));
    Graph::Ref k = g.matmul(x, g.param(store, p + ".wk"));
    Graph::Ref v = g.matmul(x, g.param(store, p + ".wv"));

    std::vector<Graph::Ref> heads;
    heads.reserve(t.heads);
    for (std::size_t h = 0; h < t.heads; ++h) {
        Graph::Ref qh = g.col_slice(q, h * head_dim, head_dim);
        Graph::Ref kh = g.col_slice(k, h * head_dim, head_dim);
        Graph::Ref vh = g.col_slice(v, h * head_dim, head_dim);
        Graph::Ref scores =
            g.scale(g.matmul(qh, g.transpose(kh)), 1.0 / std::sqrt(head_dim));
        Graph::Ref attn = g.softmax_rows(scores);
        if (attention_out) attention_out->push_back(attn);
        heads.push_back(g.matmul(attn, vh));
    }
    Graph::Ref attended = g.matmul(g.concat_cols(heads), g.param(store, p + ".wo"));
    Graph::Ref h1 = g.layer_norm_rows(g.add(x, attended), g.param(store, p + ".ln1.g"),
                                      g.param(store, p + ".ln1.b"));
    Graph::Ref ffn = g.affine(
        g.relu(g.affine(h1, g.param(store, p + ".ffn.W1"), g.param(store, p + ".ffn.b1"))),
        g.param(store, p + ".ffn.W2"), g.param(store, p + ".ffn.b2"));
    return g.layer_norm_rows(g.add(h1, ffn), g.param(store, p + ".ln2.g"),
                             g.param(store, p + ".ln2.b"));
}

Graph::Ref Encoder::encode_transformer(Graph& g, ParameterStore& store,
                                       const FeatureSequence& features,
                                       std::vector<Graph::Ref>* attention_out) const {
    if (features.word_ids.empty()) throw Error("empty_input: cannot encode empty sequence");
    const TransformerConfig& t = cfg_.transformer;
    Graph::Ref x = g.embed_rows(g.param(store, "enc.word_emb"), features.word_ids);
    x = g.add(x, g.input(timing_signal(features.word_ids.size(), t.hidden)));
    for (std::size_t l = 0; l < t.layers; ++l) {
        x = self_attention_block(g, store, x, l, attention_out);
    }
    Graph::Ref pooled = g.mean_rows(x);
    Graph::Ref projected = g.affine(pooled, g.param(store, "enc.tf.proj.W"),
                                    g.param(store, "enc.tf.proj.b"));
    return g.l2_normalize_rows(projected);
}

Graph::Ref Encoder::encode(Graph& g, ParameterStore& store, const FeatureSequence& features,
                           std::vector<Graph::Ref>* attention_out) const {
    if (cfg_.kind == EncoderKind::Dan) return encode_dan(g, store, features);
    return encode_transformer(g, store, features, attention_out);
}

}  // namespace convsim
