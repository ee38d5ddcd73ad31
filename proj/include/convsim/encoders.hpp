#pragma once

#include <string>
#include <vector>

#include "convsim/graph.hpp"
#include "convsim/text.hpp"

namespace convsim {

enum class EncoderKind { Dan, Transformer };

struct DanConfig {
    // input word/bigram embedding width
    std::size_t input_dim = 300;
    // feed-forward stack; the last entry is the sentence embedding size d
    std::vector<std::size_t> hidden_layers{300, 300, 500};
};

struct TransformerConfig {
    std::size_t layers = 6;
    std::size_t heads = 8;
    std::size_t hidden = 512;
    std::size_t filter = 2048;
    // learned projection hidden -> d applied after mean pooling
    std::size_t output_dim = 500;
};

struct EncoderConfig {
    EncoderKind kind = EncoderKind::Dan;
    std::size_t word_vocab_size = 0;
    std::size_t bigram_vocab_size = 0;
    DanConfig dan;
    TransformerConfig transformer;

    std::size_t embed_dim() const {
        return kind == EncoderKind::Dan ? dan.hidden_layers.back() : transformer.output_dim;
    }
};

// Sinusoidal position encoding: entry(pos, 2i) = sin(pos / 10000^(2i/dim)),
// entry(pos, 2i+1) = cos(pos / 10000^(2i/dim)).
Tensor timing_signal(std::size_t length, std::size_t dim);

// A sentence encoder over a shared ParameterStore. All parameters live under
// the "enc." prefix, so every use of the same store is parameter-tied.
class Encoder {
public:
    explicit Encoder(EncoderConfig cfg);

    const EncoderConfig& config() const { return cfg_; }
    std::size_t embed_dim() const { return cfg_.embed_dim(); }

    void register_params(ParameterStore& store) const;

    // Unit-norm 1xd sentence embedding. Throws on an empty sequence.
    // When attention_out is non-null (transformer only) it receives the
    // per-layer, per-head attention weight matrices.
    Graph::Ref encode(Graph& g, ParameterStore& store, const FeatureSequence& features,
                      std::vector<Graph::Ref>* attention_out = nullptr) const;

    // Word+bigram embedding sum divided by sqrt(word-token count). Exposed
    // separately so the combiner contract is testable on its own.
    Graph::Ref dan_combine(Graph& g, ParameterStore& store,
                           const FeatureSequence& features) const;

    // One attention + feed-forward layer (pre-registered params for `layer`).
    Graph::Ref self_attention_block(Graph& g, ParameterStore& store, Graph::Ref x,
                                    std::size_t layer,
                                    std::vector<Graph::Ref>* attention_out = nullptr) const;

private:
    Graph::Ref encode_dan(Graph& g, ParameterStore& store,
                          const FeatureSequence& features) const;
    Graph::Ref encode_transformer(Graph& g, ParameterStore& store,
                                  const FeatureSequence& features,
                                  std::vector<Graph::Ref>* attention_out) const;

    EncoderConfig cfg_;
};

}  // namespace convsim
