#pragma once

#include <utility>

#include "defog/autodiff.hpp"
#include "defog/networks.hpp"

namespace defog {

// Frozen 16-layer-classifier-style convolutional feature extractor (thirteen
// 3x3 convs, five max pools) tapped after the 2nd and 5th pooling stages.
// Weights are either seeded He-initialized (the offline default, fully
// deterministic, no downloads) or loaded from a tensor archive exported from
// a pretrained model.
template <class T>
class FeatureExtractorT {
public:
    static FeatureExtractorT random_init(uint64_t seed);
    static FeatureExtractorT from_params(ParameterSetT<T> params, bool imagenet_norm);

    // x is a 3xHxW tensor in [-1,1]; returns (pool2 features, pool5 features).
    std::pair<ad::Var<T>, ad::Var<T>> forward(const ad::Var<T>& x) const;

    const ParameterSetT<T>& params() const { return params_; }
    bool imagenet_norm() const { return imagenet_norm_; }

    // Conv output widths per layer, shared with the loader for validation.
    static const std::vector<int>& layer_widths();

private:
    ParameterSetT<T> params_; // leaves with requires_grad = false
    bool imagenet_norm_ = false;
};

using FeatureExtractor = FeatureExtractorT<float>;

} // namespace defog
