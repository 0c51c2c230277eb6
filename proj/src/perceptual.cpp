#include "defog/perceptual.hpp"

#include <cmath>

namespace defog {

using ad::Var;
using ad::TensorT;

namespace {

// VGG16 conv plan: width per conv, pool after layers 1,3,6,9,12 (0-based).
const std::vector<int> kWidths = {64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512};
const std::vector<int> kPoolAfter = {1, 3, 6, 9, 12};

bool pool_after(int layer) {
    for (int p : kPoolAfter)
        if (p == layer)
            return true;
    return false;
}

} // namespace

template <class T>
const std::vector<int>& FeatureExtractorT<T>::layer_widths() {
    return kWidths;
}

template <class T>
FeatureExtractorT<T> FeatureExtractorT<T>::random_init(uint64_t seed) {
    Rng rng(seed);
    FeatureExtractorT<T> fe;
    int in_c = 3;
    for (size_t i = 0; i < kWidths.size(); ++i) {
        int out_c = kWidths[i];
        // He initialization keeps activation scale roughly constant through
        // the thirteen rectified layers.
        float stddev = std::sqrt(2.0f / (static_cast<float>(in_c) * 9.0f));
        TensorT<T> w({out_c, in_c, 3, 3});
        for (auto& v : w.data)
            v = static_cast<T>(rng.normal(0.0f, stddev));
        auto wv = ad::make_leaf<T>(std::move(w), false);
        auto bv = ad::make_leaf<T>(TensorT<T>({out_c}), false);
        fe.params_.items.emplace_back("conv" + std::to_string(i + 1) + ".w", wv);
        fe.params_.items.emplace_back("conv" + std::to_string(i + 1) + ".b", bv);
        in_c = out_c;
    }
    fe.imagenet_norm_ = false;
    return fe;
}

template <class T>
FeatureExtractorT<T> FeatureExtractorT<T>::from_params(ParameterSetT<T> params,
                                                       bool imagenet_norm) {
    int in_c = 3;
    for (size_t i = 0; i < kWidths.size(); ++i) {
        const auto& w = params.find("conv" + std::to_string(i + 1) + ".w");
        const auto& b = params.find("conv" + std::to_string(i + 1) + ".b");
        std::vector<int> expect = {kWidths[i], in_c, 3, 3};
        if (w->value.shape != expect || b->value.numel() != kWidths[i])
            throw Error("feature extractor: conv" + std::to_string(i + 1) + " has wrong shape");
        w->requires_grad = false;
        b->requires_grad = false;
        in_c = kWidths[i];
    }
    FeatureExtractorT<T> fe;
    fe.params_ = std::move(params);
    fe.imagenet_norm_ = imagenet_norm;
    return fe;
}

template <class T>
std::pair<Var<T>, Var<T>> FeatureExtractorT<T>::forward(const Var<T>& x) const {
    if (x->value.shape.size() != 3 || x->value.dim(0) != 3)
        throw Error("feature extractor: expected a 3xHxW input");

    Var<T> y = x;
    if (imagenet_norm_) {
        // y_c = (x_c*0.5 + 0.5 - mean_c) / std_c, per channel.
        const T mean[3] = {T(0.485), T(0.456), T(0.406)};
        const T stdv[3] = {T(0.229), T(0.224), T(0.225)};
        const int h = x->value.dim(1), w = x->value.dim(2);
        const long plane = static_cast<long>(h) * w;
        std::vector<Var<T>> chans;
        for (int c = 0; c < 3; ++c) {
            TensorT<T> scale({1, h, w});
            TensorT<T> offset({1, h, w});
            for (long i = 0; i < plane; ++i) {
                scale.data[static_cast<size_t>(i)] = T(0.5) / stdv[c];
                offset.data[static_cast<size_t>(i)] = (T(0.5) - mean[c]) / stdv[c];
            }
            Var<T> ch = ad::mul_map(ad::slice_ch(y, c, c + 1), scale);
            chans.push_back(ad::add(ch, ad::make_leaf<T>(std::move(offset), false)));
        }
        y = ad::concat_ch(ad::concat_ch(chans[0], chans[1]), chans[2]);
    }

    Var<T> pool2, pool5;
    int pools_done = 0;
    for (size_t i = 0; i < kWidths.size(); ++i) {
        const auto& w = params_.find("conv" + std::to_string(i + 1) + ".w");
        const auto& b = params_.find("conv" + std::to_string(i + 1) + ".b");
        y = ad::relu(ad::conv2d(y, w, b, 1, 1));
        if (pool_after(static_cast<int>(i))) {
            y = ad::maxpool2(y);
            ++pools_done;
            if (pools_done == 2)
                pool2 = y;
            if (pools_done == 5)
                pool5 = y;
        }
    }
    return {pool2, pool5};
}

template class FeatureExtractorT<float>;
template class FeatureExtractorT<double>;

} // namespace defog
