#pragma once

#include <span>
#include <string>
#include <vector>

#include "convsim/corpus.hpp"
#include "convsim/encoders.hpp"

namespace convsim {

struct ResponseDnnConfig {
    std::vector<std::size_t> hidden_layers{500, 500};  // tanh layers before the linear d output
};

struct NliHeadConfig {
    std::size_t hidden = 512;
    std::size_t classes = 3;
};

struct DualModelConfig {
    EncoderConfig encoder;
    ResponseDnnConfig response_dnn;
    NliHeadConfig nli;
    bool with_nli_head = false;
};

std::string dual_model_config_to_json(const DualModelConfig& cfg);
DualModelConfig dual_model_config_from_json(const std::string& json_text);

struct NliPair {
    FeatureSequence premise;
    FeatureSequence hypothesis;
    NliLabel label = NliLabel::Neutral;
};

// Tied dual encoder with response-side DNN and optional 3-way NLI head.
// Input, response and NLI encoders all reference the same "enc.*" tensors.
class DualModel {
public:
    explicit DualModel(DualModelConfig cfg);

    const DualModelConfig& config() const { return cfg_; }
    const Encoder& encoder() const { return encoder_; }
    std::size_t embed_dim() const { return encoder_.embed_dim(); }

    void register_params(ParameterStore& store) const;

    Graph::Ref encode(Graph& g, ParameterStore& store, const FeatureSequence& f) const {
        return encoder_.encode(g, store, f);
    }

    // Feed-forward over the response embedding; the output is deliberately
    // not re-normalized (its magnitude acts as a logit scale).
    Graph::Ref embed_response(Graph& g, ParameterStore& store, Graph::Ref v) const;

    // S[i][j] = encode(input_i) . embed_response(encode(response_j)).
    Graph::Ref score_batch(Graph& g, ParameterStore& store,
                           std::span<const FeatureSequence> inputs,
                           std::span<const FeatureSequence> responses) const;

    // Mean over rows of -log softmax(S[i])[i].
    static Graph::Ref response_loss(Graph& g, Graph::Ref scores);

    // (u1, u2, |u1-u2|, u1*u2) concatenation, 1x4d.
    static Graph::Ref nli_features(Graph& g, Graph::Ref u1, Graph::Ref u2);

    Graph::Ref nli_logits(Graph& g, ParameterStore& store, Graph::Ref features) const;

    struct NliBatchResult {
        Graph::Ref loss;
        double accuracy = 0.0;
    };
    // Argmax ties break toward the smallest class index.
    NliBatchResult nli_loss(Graph& g, ParameterStore& store,
                            std::span<const NliPair> pairs) const;

    // Forward-only convenience: u . v' for a single pair.
    double score_pair(ParameterStore& store, const FeatureSequence& input,
                      const FeatureSequence& response) const;

    // Forward-only unit-norm embedding.
    std::vector<double> embed_sentence(ParameterStore& store,
                                       const FeatureSequence& f) const;

private:
    DualModelConfig cfg_;
    Encoder encoder_;
};

}  // namespace convsim
