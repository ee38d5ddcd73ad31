#include "convsim/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace convsim {

Param& ParameterStore::get_or_create(const std::string& name, const Shape& shape, Init init) {
    auto it = params_.find(name);
    if (it != params_.end()) {
        if (it->second.value.shape() != shape) {
            throw ShapeError("parameter '" + name + "' exists with shape " +
                             shape_str(it->second.value.shape()) + ", requested " +
                             shape_str(shape));
        }
        return it->second;
    }
    Param p{Tensor(shape), Tensor(shape), true};
    Rng rng(seed_ ^ fnv1a(name));
    switch (init) {
        case Init::Zero:
            break;
        case Init::One:
            p.value.fill(1.0);
            break;
        case Init::GlorotUniform: {
            double fan_in = static_cast<double>(p.value.rows());
            double fan_out = static_cast<double>(p.value.cols());
            double s = std::sqrt(6.0 / (fan_in + fan_out));
            for (double& x : p.value.data()) x = rng.uniform(-s, s);
            break;
        }
        case Init::NormalEmbedding:
            for (double& x : p.value.data()) x = rng.normal(0.0, 0.1);
            break;
        case Init::Identity: {
            if (p.value.rows() != p.value.cols()) {
                throw ShapeError("identity init requires a square tensor, got " +
                                 shape_str(shape));
            }
            for (std::size_t i = 0; i < p.value.rows(); ++i) p.value.at(i, i) = 1.0;
            break;
        }
    }
    p.value.quantize_f32();
    return params_.emplace(name, std::move(p)).first->second;
}

Param& ParameterStore::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

const Param& ParameterStore::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw Error("unknown parameter '" + name + "'");
    return it->second;
}

void ParameterStore::zero_grads() {
    for (auto& [name, p] : params_) p.grad.fill(0.0);
}

double ParameterStore::grad_global_norm() const {
    double sq = 0.0;
    for (const auto& [name, p] : params_) {
        if (!p.trainable) continue;
        for (double g : p.grad.data()) sq += g * g;
    }
    return std::sqrt(sq);
}

void sgd_step(ParameterStore& store, double lr, double clip_norm) {
    double scale = 1.0;
    if (clip_norm > 0.0) {
        double norm = store.grad_global_norm();
        if (norm > clip_norm) scale = clip_norm / norm;
    }
    for (auto& [name, p] : store) {
        if (p.trainable) {
            for (std::size_t i = 0; i < p.value.size(); ++i) {
                p.value[i] -= lr * scale * p.grad[i];
            }
            p.value.quantize_f32();
            check_finite(p.value, "sgd_step");
        }
        p.grad.fill(0.0);
    }
}

namespace {

template <typename T>
void write_le(std::ostream& out, T v) {
    // assumes little-endian host, true for every supported target
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint truncated");
    return v;
}

constexpr char kMagic[4] = {'C', 'S', 'I', 'M'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const std::string& config_json) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path.string());
    out.write(kMagic, 4);
    write_le<std::uint32_t>(out, kCheckpointVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(config_json.size()));
    out.write(config_json.data(), static_cast<std::streamsize>(config_json.size()));
    for (const auto& [name, p] : store) {
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_le<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.shape().size()));
        for (std::size_t d : p.value.shape()) write_le<std::uint64_t>(out, d);
        for (double x : p.value.data()) write_le<float>(out, static_cast<float>(x));
    }
    if (!out) throw DataError("write failure: " + path.string());
}

std::string load_checkpoint(const std::filesystem::path& path, ParameterStore& store) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read checkpoint: " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0) {
        throw DataError("not a checkpoint file: " + path.string());
    }
    auto version = read_le<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw DataError("unsupported_version: checkpoint format version " +
                        std::to_string(version));
    }
    auto config_len = read_le<std::uint32_t>(in);
    std::string config(config_len, '\0');
    in.read(config.data(), config_len);
    if (!in) throw DataError("checkpoint truncated");

    ParameterStore fresh(store.seed());
    while (true) {
        std::uint32_t name_len = 0;
        in.read(reinterpret_cast<char*>(&name_len), sizeof(name_len));
        if (in.eof()) break;
        if (!in) throw DataError("checkpoint truncated");
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        auto rank = read_le<std::uint32_t>(in);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<std::size_t>(read_le<std::uint64_t>(in));
        Param& p = fresh.get_or_create(name, shape, Init::Zero);
        for (double& x : p.value.data()) x = static_cast<double>(read_le<float>(in));
    }
    store = std::move(fresh);
    return config;
}

}  // namespace convsim
