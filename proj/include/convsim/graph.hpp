#pragma once

#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "convsim/params.hpp"
#include "convsim/tensor.hpp"

namespace convsim {

// Reverse-mode tape. One Graph instance per forward pass; ops append nodes in
// creation order and backward() replays closures in reverse. All node tensors
// are 2-D (vectors are 1xN rows).
class Graph {
public:
    struct Node {
        Tensor value;
        Tensor grad;
        std::function<void()> backprop;  // accumulates into parent grads
    };
    using Ref = Node*;

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    // Leaves.
    Ref input(Tensor v);
    Ref param(ParameterStore& store, const std::string& name);

    // Elementwise / broadcast.
    Ref add(Ref a, Ref b);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);
    Ref div(Ref a, Ref b);
    Ref scale(Ref a, double c);
    Ref add_const(Ref a, double c);
    Ref tanh_op(Ref a);
    Ref relu(Ref a);
    Ref abs_op(Ref a);
    // acos of inputs clamped to [-1, 1]; zero gradient where clamped
    Ref arccos_clamped(Ref a);
    Ref sqrt_eps(Ref a, double eps = 1e-12);

    // Linear algebra.
    Ref matmul(Ref a, Ref b);
    Ref transpose(Ref a);
    // y = xW + b, b broadcast over rows
    Ref affine(Ref x, Ref w, Ref b);
    Ref add_row(Ref x, Ref b);

    // Shape ops.
    Ref concat_rows(const std::vector<Ref>& xs);
    Ref concat_cols(const std::vector<Ref>& xs);
    Ref col_slice(Ref x, std::size_t begin, std::size_t count);

    // Reductions.
    Ref mean_rows(Ref x);     // MxN -> 1xN
    Ref rowwise_sum(Ref x);   // MxN -> Mx1
    Ref mean_all(Ref x);      // MxN -> 1x1

    // Embedding lookups into a VxD table.
    Ref embed_bag(Ref table, std::span<const std::int32_t> ids);   // sum of rows, 1xD
    Ref embed_rows(Ref table, std::span<const std::int32_t> ids);  // LxD gather

    // Row-wise normalizations.
    Ref l2_normalize_rows(Ref x, double eps = 1e-12);
    Ref softmax_rows(Ref x);
    Ref layer_norm_rows(Ref x, Ref gain, Ref bias, double eps = 1e-6);

    // Mean over rows of -log softmax(row)[target]; numerically stable.
    // If probs_out is non-null it receives the KxC probability matrix.
    Ref softmax_xent(Ref logits, std::span<const std::int32_t> targets,
                     Tensor* probs_out = nullptr);

    const Tensor& value(Ref r) const { return r->value; }

    // Seeds d(loss)/d(loss) = 1, runs the tape in reverse, then flushes leaf
    // gradients into their parameter stores.
    void backward(Ref loss);

private:
    Ref make(Tensor v);

    std::deque<Node> nodes_;
    struct Binding {
        Node* node;
        Param* param;
    };
    std::vector<Binding> bindings_;
};

struct GradCheckEntry {
    std::string name;
    std::size_t index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_error = 0.0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    GradCheckEntry worst;
    std::size_t coords_checked = 0;
    bool passed(double tolerance) const { return max_rel_error <= tolerance; }
};

// Central finite differences vs analytic gradients on a random coordinate
// subset of every trainable tensor. `eval(true)` must run forward + backward
// (grads accumulated into `store`) and return the loss; `eval(false)` runs
// forward only. Perturbed values are f32-quantized and the actual realized
// step is used as the FD denominator.
GradCheckReport grad_check(const std::function<double(bool)>& eval, ParameterStore& store,
                           double h = 1e-3, std::size_t coords_per_tensor = 4,
                           std::uint64_t seed = 0);

}  // namespace convsim
