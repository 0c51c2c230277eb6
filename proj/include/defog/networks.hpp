#pragma once

#include <string>
#include <vector>

#include "defog/autodiff.hpp"
#include "defog/image.hpp"
#include "defog/rng.hpp"

namespace defog {

enum class Role { kGenerator, kDiscPatch, kDiscPixel };

enum class UpsampleMode { kUim, kDeconv, kBilinear, kPixelShuffle };

// Declarative network description. The defaults reproduce the reference
// layout: encoder 7x7/s1/64, 3x3/s2/128, 3x3/s2/256; nine 256-channel
// residual blocks; two upscaling inception modules with branch widths
// (64,32,32) and (32,16,16); head convs 3x3/s1/64 and 7x7/s1/3.
struct NetworkSpec {
    Role role = Role::kGenerator;
    int in_channels = 6; // current-scale foggy image + auxiliary image
    bool instance_norm = true;
    int se_reduction = 16;
    int trunk_blocks = 9;
    UpsampleMode upsample = UpsampleMode::kUim;
    bool long_range_residual = true;

    static NetworkSpec generator() { return NetworkSpec{}; }
    static NetworkSpec disc_patch() {
        NetworkSpec s;
        s.role = Role::kDiscPatch;
        s.in_channels = 3;
        return s;
    }
    static NetworkSpec disc_pixel() {
        NetworkSpec s;
        s.role = Role::kDiscPixel;
        s.in_channels = 3;
        return s;
    }
};

// Named learnable tensors. Order is fixed by construction so that seeded
// initialization, checkpoints, and optimizer state all align.
template <class T>
struct ParameterSetT {
    std::vector<std::pair<std::string, ad::Var<T>>> items;

    ad::Var<T> add(const std::string& name, ad::TensorT<T> init) {
        auto v = ad::make_leaf<T>(std::move(init), true);
        items.emplace_back(name, v);
        return v;
    }
    const ad::Var<T>& find(const std::string& name) const {
        for (const auto& [n, v] : items)
            if (n == name)
                return v;
        throw Error("parameter not found: " + name);
    }
    void zero_grads() {
        for (auto& [n, v] : items)
            v->zero_grad();
    }
    long total_count() const {
        long n = 0;
        for (const auto& [name, v] : items)
            n += v->value.numel();
        return n;
    }
    bool all_finite() const {
        for (const auto& [name, v] : items)
            if (!ad::all_finite(v->value))
                return false;
        return true;
    }
};

namespace detail {

// Conv + optional instance norm + activation, the repeating unit of every
// network here.
enum class Act { kNone, kRelu, kLeaky };

template <class T>
struct ConvBlockT {
    ad::Var<T> w, b;
    int stride = 1, pad = 0;
    bool norm = false;
    Act act = Act::kNone;

    ad::Var<T> forward(const ad::Var<T>& x) const;
};

template <class T>
struct ResBlockT {
    ConvBlockT<T> c1, c2;
    ad::Var<T> forward(const ad::Var<T>& x) const;
};

template <class T>
struct SeLayerT {
    ad::Var<T> fc1_w, fc1_b, fc2_w, fc2_b;
    ad::Var<T> forward(const ad::Var<T>& x) const;
};

// One x2 upscaling stage: either the three-branch inception module with SE
// recalibration, or a single branch for the ablation variants.
template <class T>
struct UpStageT {
    UpsampleMode mode = UpsampleMode::kUim;
    bool norm = true;
    // deconv branch: 1x1 reduce -> transposed conv -> 3x3 conv
    ConvBlockT<T> d_reduce, d_post;
    ad::Var<T> d_up_w, d_up_b;
    // bilinear branch: 1x1 reduce -> bilinear x2 -> two 3x3 convs
    ConvBlockT<T> b_reduce, b_c1, b_c2;
    // pixel-shuffle branch: shuffle -> 3x3 conv
    ConvBlockT<T> p_post;
    SeLayerT<T> se;
    bool use_se = false;

    ad::Var<T> forward(const ad::Var<T>& x) const;
};

} // namespace detail

// Defogging / fogging network. Operates on 6-channel [-1,1] inputs
// (channels 0-2 carry the current-scale foggy image) and emits a 3-channel
// [-1,1] image: clamp(input + tanh(residual)) when the long-range residual
// is enabled, tanh(head output) otherwise. Spatial dims are preserved for
// any input; sides not divisible by 4 are reflect-padded internally and
// cropped back.
template <class T>
class GeneratorT {
public:
    static GeneratorT build(const NetworkSpec& spec, Rng& rng);

    ad::Var<T> forward(const ad::Var<T>& x6) const;

    const NetworkSpec& spec() const { return spec_; }
    ParameterSetT<T>& params() { return params_; }
    const ParameterSetT<T>& params() const { return params_; }

private:
    NetworkSpec spec_;
    ParameterSetT<T> params_;
    detail::ConvBlockT<T> enc1_, enc2_, enc3_;
    std::vector<detail::ResBlockT<T>> trunk_;
    detail::UpStageT<T> up1_, up2_;
    detail::ConvBlockT<T> head1_, head2_;
};

// PatchGAN (five 4x4/s2 convs, widths 64..512 then 1) or pixel-level
// (three 1x1 convs, widths 64,128,1) discriminator. Leaky ReLU slope 0.2
// between layers; the final layer is linear for the least-squares objective.
template <class T>
class DiscriminatorT {
public:
    static DiscriminatorT build(const NetworkSpec& spec, Rng& rng);

    ad::Var<T> forward(const ad::Var<T>& img) const;

    const NetworkSpec& spec() const { return spec_; }
    ParameterSetT<T>& params() { return params_; }
    const ParameterSetT<T>& params() const { return params_; }

private:
    NetworkSpec spec_;
    ParameterSetT<T> params_;
    std::vector<detail::ConvBlockT<T>> layers_;
};

using Generator = GeneratorT<float>;
using Discriminator = DiscriminatorT<float>;
using ParameterSet = ParameterSetT<float>;

// Image (CHW float) <-> tensor bridging.
ad::TensorT<float> tensor_from_image(const Image& img);
Image image_from_tensor(const ad::TensorT<float>& t, ValueRange range);

} // namespace defog
