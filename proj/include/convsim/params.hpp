#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "convsim/tensor.hpp"

namespace convsim {

enum class Init {
    Zero,
    One,
    // uniform(-s, s), s = sqrt(6 / (fan_in + fan_out))
    GlorotUniform,
    // normal(0, 0.1), used for embedding tables
    NormalEmbedding,
    Identity,
};

struct Param {
    Tensor value;
    Tensor grad;
    bool trainable = true;
};

// Named parameter tensors with paired gradient buffers. Iteration order is
// sorted by name. Initialization derives a per-tensor RNG from (seed, name)
// so creation order does not affect values.
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

    Param& get_or_create(const std::string& name, const Shape& shape, Init init);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    void zero_grads();
    double grad_global_norm() const;
    std::size_t size() const { return params_.size(); }
    std::uint64_t seed() const { return seed_; }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Param> params_;
    std::uint64_t seed_;
};

// value <- value - lr * grad for trainable tensors, then grads are zeroed.
// Gradients are first clipped by global norm (clip_norm <= 0 disables).
// Updated values are quantized to f32.
void sgd_step(ParameterStore& store, double lr, double clip_norm = 5.0);

// Checkpoint file: magic "CSIM", format version u32, config blob length u32 +
// JSON config bytes, then per-tensor records sorted by name (name length u32,
// UTF-8 name, rank u32, dims as u64, little-endian f32 payload).
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const std::string& config_json);
// Loads tensors into `store` (replacing its contents) and returns the config blob.
std::string load_checkpoint(const std::filesystem::path& path, ParameterStore& store);

}  // namespace convsim
