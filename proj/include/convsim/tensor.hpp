#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "convsim/errors.hpp"

namespace convsim {

using Shape = std::vector<std::size_t>;

// Dense row-major tensor. Arithmetic runs in double; parameter values are
// quantized to f32 at every mutation point so checkpoints (f32 payload)
// round-trip exactly.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }
    static Tensor row(std::vector<double> v);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j) { return data_[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * cols() + j]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    void fill(double v);
    bool all_finite() const;
    // Rounds every entry to the nearest f32 value.
    void quantize_f32();

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    Shape shape_;
    std::vector<double> data_;
};

std::string shape_str(const Shape& s);
void check_finite(const Tensor& t, const char* where);

// Deterministic RNG used everywhere randomness appears. Wraps a splitmix64
// stream so results do not depend on library-specific distribution code.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64();
    // Uniform in [0, 1).
    double next_double();
    double uniform(double lo, double hi);
    // Box-Muller, one value per call.
    double normal(double mean, double stddev);
    // Uniform index in [0, n).
    std::size_t index(std::size_t n);
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::uint64_t state_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a(std::string_view s);

}  // namespace convsim
