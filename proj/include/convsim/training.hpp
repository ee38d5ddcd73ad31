#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "convsim/dual_model.hpp"

namespace convsim {

struct TrainingConfig {
    std::size_t batch_size_initial = 128;
    std::size_t batch_size_late = 256;
    double lr_initial = 0.01;
    double lr_late = 0.001;
    std::size_t total_steps = 20000;
    std::size_t switch_step = 15000;  // lr and batch size switch exactly once here
    double nli_task_fraction = 0.05;
    double clip_norm = 5.0;
    std::uint64_t seed = 0;
    std::size_t checkpoint_every = 0;  // 0 = only at the end
    std::size_t log_every = 100;

    void validate() const;
};

std::string training_config_to_json(const TrainingConfig& cfg);
TrainingConfig training_config_from_json(const std::string& json_text);

// Epoch-wise seeded shuffle over dataset indices; the final partial batch of
// each epoch is dropped so every batch has exactly K items.
class BatchSampler {
public:
    BatchSampler(std::size_t dataset_size, std::size_t batch_size, std::uint64_t seed);

    std::vector<std::size_t> next_batch();
    void set_batch_size(std::size_t k);
    std::size_t batch_size() const { return batch_size_; }
    std::size_t batches_per_epoch() const { return order_.size() / batch_size_; }

private:
    void reshuffle();

    std::size_t batch_size_;
    std::uint64_t seed_;
    std::size_t epoch_ = 0;
    std::size_t cursor_ = 0;
    std::vector<std::size_t> order_;
};

struct StepRecord {
    std::size_t step = 0;
    char task = 'r';  // 'r' Reddit response task, 'n' NLI task
    double loss = 0.0;
    double lr = 0.0;
    std::size_t batch_size = 0;
    std::vector<std::string> updated_tensors;  // names with nonzero gradient
};

struct TrainResult {
    std::size_t steps_run = 0;
    std::size_t nli_steps = 0;
    std::vector<double> losses;  // per-step task loss, in order
};

using StepCallback = std::function<void(const StepRecord&)>;

// Single-threaded deterministic training loop. Per step the task is drawn
// Bernoulli(nli_task_fraction); NLI batches feed the classifier head, all
// other steps feed the response loss. lr and batch size switch to the late
// values at switch_step. Telemetry lines (JSONL) go to `telemetry` when set.
TrainResult train(const TrainingConfig& cfg, const DualModel& model,
                  const std::vector<std::pair<FeatureSequence, FeatureSequence>>& pairs,
                  const std::vector<NliPair>& nli, ParameterStore& store,
                  std::ostream* telemetry = nullptr,
                  const StepCallback& on_step = nullptr);

// Checkpoint wrappers bundling the model config, training config, step and
// vocabulary reference into the config blob of the compute-level format.
struct CheckpointMeta {
    std::size_t step = 0;
    DualModelConfig model;
    std::optional<TrainingConfig> training;
    std::string vocab_ref;  // path of the vocabulary used
};

void save_model_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                           const CheckpointMeta& meta);
CheckpointMeta load_model_checkpoint(const std::filesystem::path& path,
                                     ParameterStore& store);

}  // namespace convsim
