#include "convsim/training.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace convsim {

using nlohmann::json;

void TrainingConfig::validate() const {
    if (nli_task_fraction < 0.0 || nli_task_fraction > 1.0) {
        throw Error("training config: nli_task_fraction must be within [0, 1]");
    }
    if (switch_step > total_steps) {
        throw Error("training config: switch_step must be <= total_steps");
    }
    if (batch_size_initial < 2 || batch_size_late < 2) {
        throw Error("training config: batch sizes must be >= 2");
    }
    if (lr_initial <= 0.0 || lr_late <= 0.0) {
        throw Error("training config: learning rates must be positive");
    }
}

std::string training_config_to_json(const TrainingConfig& cfg) {
    json j;
    j["batch_size_initial"] = cfg.batch_size_initial;
    j["batch_size_late"] = cfg.batch_size_late;
    j["lr_initial"] = cfg.lr_initial;
    j["lr_late"] = cfg.lr_late;
    j["total_steps"] = cfg.total_steps;
    j["switch_step"] = cfg.switch_step;
    j["nli_task_fraction"] = cfg.nli_task_fraction;
    j["clip_norm"] = cfg.clip_norm;
    j["seed"] = cfg.seed;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["log_every"] = cfg.log_every;
    return j.dump();
}

TrainingConfig training_config_from_json(const std::string& json_text) {
    json j = json::parse(json_text, nullptr, false);
    if (j.is_discarded()) throw DataError("malformed training config JSON");
    TrainingConfig cfg;
    cfg.batch_size_initial = j.value("batch_size_initial", cfg.batch_size_initial);
    cfg.batch_size_late = j.value("batch_size_late", cfg.batch_size_late);
    cfg.lr_initial = j.value("lr_initial", cfg.lr_initial);
    cfg.lr_late = j.value("lr_late", cfg.lr_late);
    cfg.total_steps = j.value("total_steps", cfg.total_steps);
    cfg.switch_step = j.value("switch_step", cfg.switch_step);
    cfg.nli_task_fraction = j.value("nli_task_fraction", cfg.nli_task_fraction);
    cfg.clip_norm = j.value("clip_norm", cfg.clip_norm);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
    cfg.log_every = j.value("log_every", cfg.log_every);
    return cfg;
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::size_t batch_size,
                           std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed), order_(dataset_size) {
    if (dataset_size < batch_size) {
        throw DataError("dataset of " + std::to_string(dataset_size) +
                        " items is smaller than batch size " + std::to_string(batch_size));
    }
    std::iota(order_.begin(), order_.end(), 0);
    reshuffle();
}

void BatchSampler::reshuffle() {
    std::iota(order_.begin(), order_.end(), 0);
    Rng rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (epoch_ + 1)));
    rng.shuffle(order_);
    cursor_ = 0;
}

std::vector<std::size_t> BatchSampler::next_batch() {
    if (cursor_ + batch_size_ > order_.size()) {
        ++epoch_;
        reshuffle();
    }
    std::vector<std::size_t> batch(order_.begin() + cursor_,
                                   order_.begin() + cursor_ + batch_size_);
    cursor_ += batch_size_;
    return batch;
}

void BatchSampler::set_batch_size(std::size_t k) {
    if (k > order_.size()) {
        throw Error("batch size " + std::to_string(k) + " exceeds dataset size");
    }
    batch_size_ = k;
    // restart the epoch so every batch keeps exactly k items
    ++epoch_;
    reshuffle();
}

namespace {

void emit_telemetry(std::ostream* out, const StepRecord& rec) {
    if (!out) return;
    json j;
    j["step"] = rec.step;
    j["task"] = rec.task == 'n' ? "nli" : "reddit";
    j["loss"] = rec.loss;
    j["lr"] = rec.lr;
    j["batch_size"] = rec.batch_size;
    *out << j.dump() << "\n";
}

}  // namespace

TrainResult train(const TrainingConfig& cfg, const DualModel& model,
                  const std::vector<std::pair<FeatureSequence, FeatureSequence>>& pairs,
                  const std::vector<NliPair>& nli, ParameterStore& store,
                  std::ostream* telemetry, const StepCallback& on_step) {
    cfg.validate();
    model.register_params(store);

    double nli_fraction = nli.empty() ? 0.0 : cfg.nli_task_fraction;
    BatchSampler reddit_batches(pairs.size(), cfg.batch_size_initial, cfg.seed);
    std::optional<BatchSampler> nli_batches;
    if (nli_fraction > 0.0) {
        nli_batches.emplace(nli.size(), std::min(cfg.batch_size_initial, nli.size()),
                            cfg.seed ^ 0x6e6c69ULL);
    }
    Rng task_rng(cfg.seed ^ 0x7461736bULL);

    TrainResult result;
    double lr = cfg.lr_initial;
    for (std::size_t step = 0; step < cfg.total_steps; ++step) {
        if (step == cfg.switch_step) {
            lr = cfg.lr_late;
            reddit_batches.set_batch_size(std::min(cfg.batch_size_late, pairs.size()));
            if (nli_batches) {
                nli_batches->set_batch_size(std::min(cfg.batch_size_late, nli.size()));
            }
        }
        bool nli_step = nli_fraction > 0.0 && task_rng.next_double() < nli_fraction;

        Graph g;
        Graph::Ref loss = nullptr;
        std::size_t batch_size = 0;
        if (nli_step) {
            auto idx = nli_batches->next_batch();
            batch_size = idx.size();
            std::vector<NliPair> batch;
            batch.reserve(idx.size());
            for (std::size_t i : idx) batch.push_back(nli[i]);
            loss = model.nli_loss(g, store, batch).loss;
        } else {
            auto idx = reddit_batches.next_batch();
            batch_size = idx.size();
            std::vector<FeatureSequence> inputs, responses;
            inputs.reserve(idx.size());
            responses.reserve(idx.size());
            for (std::size_t i : idx) {
                inputs.push_back(pairs[i].first);
                responses.push_back(pairs[i].second);
            }
            Graph::Ref scores = model.score_batch(g, store, inputs, responses);
            loss = DualModel::response_loss(g, scores);
        }

        double loss_value = loss->value[0];
        if (!std::isfinite(loss_value)) {
            throw NumericError("non-finite loss at step " + std::to_string(step));
        }
        store.zero_grads();
        g.backward(loss);

        StepRecord rec;
        rec.step = step;
        rec.task = nli_step ? 'n' : 'r';
        rec.loss = loss_value;
        rec.lr = lr;
        rec.batch_size = batch_size;
        if (on_step) {
            for (const auto& [name, p] : store) {
                for (double gv : p.grad.data()) {
                    if (gv != 0.0) {
                        rec.updated_tensors.push_back(name);
                        break;
                    }
                }
            }
        }

        sgd_step(store, lr, cfg.clip_norm);

        if (telemetry && (cfg.log_every == 0 || step % cfg.log_every == 0 ||
                          step + 1 == cfg.total_steps || step == cfg.switch_step)) {
            emit_telemetry(telemetry, rec);
        }
        if (on_step) on_step(rec);

        result.losses.push_back(loss_value);
        if (nli_step) ++result.nli_steps;
        ++result.steps_run;
    }
    return result;
}

void save_model_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                           const CheckpointMeta& meta) {
    json j;
    j["step"] = meta.step;
    j["model"] = json::parse(dual_model_config_to_json(meta.model));
    if (meta.training) j["training"] = json::parse(training_config_to_json(*meta.training));
    j["vocab_ref"] = meta.vocab_ref;
    save_checkpoint(path, store, j.dump());
}

CheckpointMeta load_model_checkpoint(const std::filesystem::path& path,
                                     ParameterStore& store) {
    std::string blob = load_checkpoint(path, store);
    json j = json::parse(blob, nullptr, false);
    if (j.is_discarded()) throw DataError("malformed checkpoint config blob");
    CheckpointMeta meta;
    meta.step = j.value("step", std::size_t{0});
    meta.model = dual_model_config_from_json(j.at("model").dump());
    if (j.contains("training")) {
        meta.training = training_config_from_json(j["training"].dump());
    }
    meta.vocab_ref = j.value("vocab_ref", "");
    return meta;
}

}  // namespace convsim
