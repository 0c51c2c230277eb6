#include "defog/networks.hpp"

namespace defog {

using ad::Var;
using ad::TensorT;

namespace {

template <class T>
TensorT<T> gaussian_init(Rng& rng, std::vector<int> shape, float stddev = 0.02f) {
    TensorT<T> t(std::move(shape));
    for (auto& v : t.data)
        v = static_cast<T>(rng.normal(0.0f, stddev));
    return t;
}

template <class T>
TensorT<T> zeros_init(std::vector<int> shape) {
    return TensorT<T>(std::move(shape));
}

} // namespace

namespace detail {

template <class T>
Var<T> ConvBlockT<T>::forward(const Var<T>& x) const {
    Var<T> y = ad::conv2d(x, w, b, stride, pad);
    if (norm)
        y = ad::instance_norm(y);
    switch (act) {
    case Act::kRelu:
        return ad::relu(y);
    case Act::kLeaky:
        return ad::leaky_relu(y, T(0.2));
    case Act::kNone:
        return y;
    }
    return y;
}

template <class T>
Var<T> ResBlockT<T>::forward(const Var<T>& x) const {
    return ad::add(x, c2.forward(c1.forward(x)));
}

template <class T>
Var<T> SeLayerT<T>::forward(const Var<T>& x) const {
    Var<T> z = ad::global_avg_pool(x);
    Var<T> h = ad::relu(ad::linear(z, fc1_w, fc1_b));
    Var<T> gates = ad::sigmoid_op(ad::linear(h, fc2_w, fc2_b));
    return ad::scale_channels(x, gates);
}

template <class T>
Var<T> UpStageT<T>::forward(const Var<T>& x) const {
    auto deconv_up = [this](const Var<T>& in) {
        Var<T> y = ad::conv_transpose2d_x2(d_reduce.forward(in), d_up_w, d_up_b);
        if (norm)
            y = ad::instance_norm(y);
        return ad::relu(y);
    };
    auto bilinear_up = [this](const Var<T>& in) {
        Var<T> y = b_reduce.forward(in);
        return ad::bilinear_resize(y, 2 * y->value.dim(1), 2 * y->value.dim(2));
    };

    Var<T> out;
    switch (mode) {
    case UpsampleMode::kUim: {
        Var<T> d = d_post.forward(deconv_up(x));
        Var<T> bb = b_c2.forward(b_c1.forward(bilinear_up(x)));
        Var<T> p = p_post.forward(ad::pixel_shuffle2(x));
        out = ad::concat_ch(ad::concat_ch(d, bb), p);
        break;
    }
    case UpsampleMode::kDeconv:
        out = d_post.forward(deconv_up(x));
        break;
    case UpsampleMode::kBilinear:
        out = b_c2.forward(b_c1.forward(bilinear_up(x)));
        break;
    case UpsampleMode::kPixelShuffle:
        out = p_post.forward(ad::pixel_shuffle2(x));
        break;
    }
    if (use_se)
        out = se.forward(out);
    return out;
}

template struct ConvBlockT<float>;
template struct ConvBlockT<double>;
template struct ResBlockT<float>;
template struct ResBlockT<double>;
template struct SeLayerT<float>;
template struct SeLayerT<double>;
template struct UpStageT<float>;
template struct UpStageT<double>;

} // namespace detail

namespace {

using detail::Act;

// Conv with instance norm + ReLU (generator style).
template <class T>
detail::ConvBlockT<T> make_gen_conv(ParameterSetT<T>& ps, Rng& rng, const std::string& name,
                                    int in_c, int out_c, int k, int stride, bool norm,
                                    Act act) {
    detail::ConvBlockT<T> cb;
    cb.w = ps.add(name + ".w", gaussian_init<T>(rng, {out_c, in_c, k, k}));
    cb.b = ps.add(name + ".b", zeros_init<T>({out_c}));
    cb.stride = stride;
    cb.pad = k / 2;
    cb.norm = norm;
    cb.act = act;
    return cb;
}

template <class T>
detail::SeLayerT<T> make_se(ParameterSetT<T>& ps, Rng& rng, const std::string& name,
                            int channels, int reduction) {
    if (reduction < 1 || channels % reduction != 0)
        throw Error("NetworkSpec: se_reduction must divide " + std::to_string(channels));
    int mid = channels / reduction;
    detail::SeLayerT<T> se;
    se.fc1_w = ps.add(name + ".fc1.w", gaussian_init<T>(rng, {mid, channels}));
    se.fc1_b = ps.add(name + ".fc1.b", zeros_init<T>({mid}));
    se.fc2_w = ps.add(name + ".fc2.w", gaussian_init<T>(rng, {channels, mid}));
    se.fc2_b = ps.add(name + ".fc2.b", zeros_init<T>({channels}));
    return se;
}

// Branch widths per module: UIM1 (64,32,32) on 256 input channels, UIM2
// (32,16,16) on 128. The 1x1 reductions halve the stage's input channels.
template <class T>
detail::UpStageT<T> make_up_stage(ParameterSetT<T>& ps, Rng& rng, const std::string& name,
                                  const NetworkSpec& spec, int in_c, int d, int b, int p) {
    detail::UpStageT<T> up;
    up.mode = spec.upsample;
    up.norm = spec.instance_norm;
    const bool n = spec.instance_norm;
    const int half = in_c / 2;
    const int shuffled = in_c / 4;
    const int full = d + b + p;

    switch (spec.upsample) {
    case UpsampleMode::kUim:
        up.d_reduce = make_gen_conv(ps, rng, name + ".deconv.reduce", in_c, half, 1, 1, n, Act::kRelu);
        up.d_up_w = ps.add(name + ".deconv.up.w", gaussian_init<T>(rng, {half, half, 3, 3}));
        up.d_up_b = ps.add(name + ".deconv.up.b", zeros_init<T>({half}));
        up.d_post = make_gen_conv(ps, rng, name + ".deconv.post", half, d, 3, 1, n, Act::kRelu);
        up.b_reduce = make_gen_conv(ps, rng, name + ".bilinear.reduce", in_c, half, 1, 1, n, Act::kRelu);
        up.b_c1 = make_gen_conv(ps, rng, name + ".bilinear.c1", half, b, 3, 1, n, Act::kRelu);
        up.b_c2 = make_gen_conv(ps, rng, name + ".bilinear.c2", b, b, 3, 1, n, Act::kRelu);
        up.p_post = make_gen_conv(ps, rng, name + ".shuffle.post", shuffled, p, 3, 1, n, Act::kRelu);
        up.se = make_se(ps, rng, name + ".se", full, spec.se_reduction);
        up.use_se = true;
        break;
    case UpsampleMode::kDeconv:
        up.d_reduce = make_gen_conv(ps, rng, name + ".reduce", in_c, half, 1, 1, n, Act::kRelu);
        up.d_up_w = ps.add(name + ".up.w", gaussian_init<T>(rng, {half, half, 3, 3}));
        up.d_up_b = ps.add(name + ".up.b", zeros_init<T>({half}));
        up.d_post = make_gen_conv(ps, rng, name + ".post", half, full, 3, 1, n, Act::kRelu);
        break;
    case UpsampleMode::kBilinear:
        up.b_reduce = make_gen_conv(ps, rng, name + ".reduce", in_c, half, 1, 1, n, Act::kRelu);
        up.b_c1 = make_gen_conv(ps, rng, name + ".c1", half, full, 3, 1, n, Act::kRelu);
        up.b_c2 = make_gen_conv(ps, rng, name + ".c2", full, full, 3, 1, n, Act::kRelu);
        break;
    case UpsampleMode::kPixelShuffle:
        up.p_post = make_gen_conv(ps, rng, name + ".post", shuffled, full, 3, 1, n, Act::kRelu);
        break;
    }
    return up;
}

} // namespace

template <class T>
GeneratorT<T> GeneratorT<T>::build(const NetworkSpec& spec, Rng& rng) {
    if (spec.role != Role::kGenerator)
        throw Error("GeneratorT::build: spec.role is not a generator");
    if (spec.in_channels < 1)
        throw Error("GeneratorT::build: bad in_channels");
    if (spec.trunk_blocks < 1)
        throw Error("GeneratorT::build: trunk_blocks must be >= 1");

    GeneratorT<T> g;
    g.spec_ = spec;
    auto& ps = g.params_;
    const bool n = spec.instance_norm;

    g.enc1_ = make_gen_conv(ps, rng, "enc1", spec.in_channels, 64, 7, 1, n, Act::kRelu);
    g.enc2_ = make_gen_conv(ps, rng, "enc2", 64, 128, 3, 2, n, Act::kRelu);
    g.enc3_ = make_gen_conv(ps, rng, "enc3", 128, 256, 3, 2, n, Act::kRelu);

    for (int i = 0; i < spec.trunk_blocks; ++i) {
        detail::ResBlockT<T> rb;
        std::string base = "res" + std::to_string(i + 1);
        rb.c1 = make_gen_conv(ps, rng, base + ".c1", 256, 256, 3, 1, n, Act::kRelu);
        rb.c2 = make_gen_conv(ps, rng, base + ".c2", 256, 256, 3, 1, n, Act::kNone);
        g.trunk_.push_back(rb);
    }

    g.up1_ = make_up_stage(ps, rng, "uim1", spec, 256, 64, 32, 32);
    g.up2_ = make_up_stage(ps, rng, "uim2", spec, 128, 32, 16, 16);

    g.head1_ = make_gen_conv(ps, rng, "head1", 64, 64, 3, 1, n, Act::kRelu);
    g.head2_ = make_gen_conv(ps, rng, "head2", 64, 3, 7, 1, false, Act::kNone);
    return g;
}

template <class T>
Var<T> GeneratorT<T>::forward(const Var<T>& x6) const {
    if (x6->value.shape.size() != 3 || x6->value.dim(0) != spec_.in_channels)
        throw Error("generator: expected " + std::to_string(spec_.in_channels) +
                    " input channels, got " +
                    std::to_string(x6->value.shape.size() == 3 ? x6->value.dim(0) : -1));
    const int h = x6->value.dim(1), w = x6->value.dim(2);

    // Two stride-2 encoders against two x2 decoders: sides must divide by 4
    // to come back to the input size. Pad internally otherwise.
    const int ph = (4 - h % 4) % 4;
    const int pw = (4 - w % 4) % 4;
    Var<T> x = (ph || pw) ? ad::pad_reflect(x6, 0, ph, 0, pw) : x6;

    Var<T> f = enc3_.forward(enc2_.forward(enc1_.forward(x)));
    for (const auto& rb : trunk_)
        f = rb.forward(f);
    f = up2_.forward(up1_.forward(f));
    Var<T> res = head2_.forward(head1_.forward(f));

    Var<T> out;
    if (spec_.long_range_residual) {
        Var<T> base = ad::slice_ch(x, 0, 3);
        out = ad::clamp_op(ad::add(base, ad::tanh_op(res)), T(-1), T(1));
    } else {
        out = ad::tanh_op(res);
    }
    if (ph || pw)
        out = ad::crop_spatial(out, 0, 0, h, w);
    return out;
}

template <class T>
DiscriminatorT<T> DiscriminatorT<T>::build(const NetworkSpec& spec, Rng& rng) {
    if (spec.role == Role::kGenerator)
        throw Error("DiscriminatorT::build: spec.role is a generator");
    DiscriminatorT<T> d;
    d.spec_ = spec;
    auto& ps = d.params_;
    const bool n = spec.instance_norm;

    if (spec.role == Role::kDiscPatch) {
        const int widths[5] = {64, 128, 256, 512, 1};
        int in_c = spec.in_channels;
        for (int i = 0; i < 5; ++i) {
            bool last = i == 4;
            detail::ConvBlockT<T> cb;
            std::string base = "l" + std::to_string(i + 1);
            cb.w = ps.add(base + ".w", gaussian_init<T>(rng, {widths[i], in_c, 4, 4}));
            cb.b = ps.add(base + ".b", zeros_init<T>({widths[i]}));
            cb.stride = 2;
            cb.pad = 1;
            cb.norm = n && !last;
            cb.act = last ? Act::kNone : Act::kLeaky;
            d.layers_.push_back(cb);
            in_c = widths[i];
        }
    } else {
        const int widths[3] = {64, 128, 1};
        int in_c = spec.in_channels;
        for (int i = 0; i < 3; ++i) {
            bool last = i == 2;
            detail::ConvBlockT<T> cb;
            std::string base = "l" + std::to_string(i + 1);
            cb.w = ps.add(base + ".w", gaussian_init<T>(rng, {widths[i], in_c, 1, 1}));
            cb.b = ps.add(base + ".b", zeros_init<T>({widths[i]}));
            cb.stride = 1;
            cb.pad = 0;
            cb.norm = n && !last;
            cb.act = last ? Act::kNone : Act::kLeaky;
            d.layers_.push_back(cb);
            in_c = widths[i];
        }
    }
    return d;
}

template <class T>
Var<T> DiscriminatorT<T>::forward(const Var<T>& img) const {
    if (img->value.shape.size() != 3 || img->value.dim(0) != spec_.in_channels)
        throw Error("discriminator: expected a 3-channel image");
    if (spec_.role == Role::kDiscPatch &&
        (img->value.dim(1) < 32 || img->value.dim(2) < 32))
        throw Error("discriminator: patch discriminator needs sides >= 32, got " +
                    std::to_string(img->value.dim(1)) + "x" + std::to_string(img->value.dim(2)));
    Var<T> y = img;
    for (const auto& l : layers_)
        y = l.forward(y);
    return y;
}

template class GeneratorT<float>;
template class GeneratorT<double>;
template class DiscriminatorT<float>;
template class DiscriminatorT<double>;

ad::TensorT<float> tensor_from_image(const Image& img) {
    ad::TensorT<float> t({img.channels, img.height, img.width});
    t.data = img.data;
    return t;
}

Image image_from_tensor(const ad::TensorT<float>& t, ValueRange range) {
    if (t.shape.size() != 3)
        throw Error("image_from_tensor: expected CxHxW");
    Image img(t.dim(0), t.dim(1), t.dim(2), range);
    img.data = t.data;
    return img;
}

} // namespace defog
