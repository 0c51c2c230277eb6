#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <utility>
#include <vector>

#include "defog/error.hpp"

namespace defog::ad {

// Dense row-major tensor. Shapes used here are {C,H,W} for feature maps,
// {OC,IC,KH,KW} for conv weights, {N} for vectors, {1} for scalars.
template <class T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    TensorT() = default;
    explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(numel_of(shape)), T(0));
    }

    static long numel_of(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) {
            if (d < 1)
                throw Error("tensor: non-positive dimension");
            n *= d;
        }
        return n;
    }

    long numel() const { return static_cast<long>(data.size()); }
    int dim(size_t i) const { return shape[i]; }
    bool same_shape(const TensorT& o) const { return shape == o.shape; }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }
};

// One node of the dynamic tape. Ops link nodes through `parents` and record
// a closure that routes the node's gradient to its parents. When gradients
// are globally disabled, or no parent needs them, nodes are created unlinked
// so intermediate results free as soon as callers drop them.
template <class T>
struct NodeT {
    TensorT<T> value;
    TensorT<T> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<NodeT<T>>> parents;
    std::function<void(NodeT<T>&)> backfn;

    void ensure_grad() {
        if (grad.data.empty()) {
            grad.shape = value.shape;
            grad.data.assign(value.data.size(), T(0));
        }
    }
    void zero_grad() {
        grad.shape.clear();
        grad.data.clear();
    }
};

template <class T>
using Var = std::shared_ptr<NodeT<T>>;

bool grad_enabled();

// RAII switch that disables graph recording, for inference paths.
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    bool saved;
};

template <class T>
Var<T> make_leaf(TensorT<T> value, bool requires_grad = false) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

template <class T>
Var<T> detach(const Var<T>& v) {
    return make_leaf(v->value, false);
}

// Reverse sweep from a scalar root. Leaf gradients accumulate; intermediate
// gradients are freed as the sweep passes them.
template <class T>
void backward(const Var<T>& root);

// ---- graph ops ----------------------------------------------------------

// Zero-padded cross-correlation, weight {OC,IC,KH,KW}, bias {OC}.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad);

// Transposed conv, kernel 3 stride 2 pad 1 output-padding 1: exact x2
// upscaling. Weight {IC,OC,3,3}, bias {OC}.
template <class T>
Var<T> conv_transpose2d_x2(const Var<T>& x, const Var<T>& w, const Var<T>& b);

// {C,H,W} -> {C/4, 2H, 2W}; out[c, 2y+i, 2x+j] = in[4c + 2i + j, y, x].
template <class T>
Var<T> pixel_shuffle2(const Var<T>& x);

// Bilinear resample, half-pixel centers, clamped taps. Matches the image
// module's resize so cascade scales and framework scales agree exactly.
template <class T>
Var<T> bilinear_resize(const Var<T>& x, int out_h, int out_w);

// Per-channel, per-instance normalization without affine parameters.
template <class T>
Var<T> instance_norm(const Var<T>& x, T eps = T(1e-5));

template <class T> Var<T> relu(const Var<T>& x);
template <class T> Var<T> leaky_relu(const Var<T>& x, T slope);
template <class T> Var<T> tanh_op(const Var<T>& x);
template <class T> Var<T> sigmoid_op(const Var<T>& x);
template <class T> Var<T> clamp_op(const Var<T>& x, T lo, T hi);

template <class T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> sub(const Var<T>& a, const Var<T>& b);

// Elementwise product with a constant single-channel map, broadcast across
// the channel dimension. The map is data, not a differentiable input.
template <class T>
Var<T> mul_map(const Var<T>& x, const TensorT<T>& map);

template <class T> Var<T> concat_ch(const Var<T>& a, const Var<T>& b);
template <class T> Var<T> slice_ch(const Var<T>& x, int c0, int c1);

// Reflect padding (edge-inclusive mirror) on spatial dims.
template <class T>
Var<T> pad_reflect(const Var<T>& x, int top, int bottom, int left, int right);

template <class T>
Var<T> crop_spatial(const Var<T>& x, int y0, int x0, int out_h, int out_w);

template <class T> Var<T> global_avg_pool(const Var<T>& x); // {C,H,W} -> {C}
template <class T> Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b);
template <class T> Var<T> scale_channels(const Var<T>& x, const Var<T>& gates);
template <class T> Var<T> maxpool2(const Var<T>& x);

// ---- scalar-valued reductions (double accumulation inside) --------------

template <class T> Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);

// mean(|(a-b) .* map|), map single-channel broadcast across channels.
template <class T>
Var<T> mean_abs_diff_weighted(const Var<T>& a, const Var<T>& b, const TensorT<T>& map);

template <class T> Var<T> mean_sq_diff(const Var<T>& a, const Var<T>& b);

// mean((x .* map - target)^2); pass an empty map for no weighting.
template <class T>
Var<T> mean_sq_affine(const Var<T>& x, const TensorT<T>& map, T target);

// sum_i coeff_i * scalar_i
template <class T>
Var<T> scalar_combine(const std::vector<std::pair<Var<T>, T>>& terms);

template <class T>
T scalar_value(const Var<T>& v);

template <class T>
bool all_finite(const TensorT<T>& t);

} // namespace defog::ad
