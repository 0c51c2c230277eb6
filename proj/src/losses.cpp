#include "defog/losses.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

namespace defog {

using ad::TensorT;
using ad::Var;

PriorWeighting prior_weighting_from_string(const std::string& s) {
    if (s == "score")
        return PriorWeighting::kScore;
    if (s == "input")
        return PriorWeighting::kInput;
    if (s == "none")
        return PriorWeighting::kNone;
    throw UserError("prior_weighting must be score, input, or none; got '" + s + "'");
}

std::string to_string(PriorWeighting pw) {
    switch (pw) {
    case PriorWeighting::kScore: return "score";
    case PriorWeighting::kInput: return "input";
    case PriorWeighting::kNone: return "none";
    }
    return "?";
}

bool LossReport::finite() const {
    for (double v : {l_cyc, l_pgcyc, l_vgg, l_pgG, l_ganF, l_dX, l_dY, total})
        if (!std::isfinite(v))
            return false;
    return true;
}

double total_from_components(double l_cyc, double l_pgcyc, double l_vgg,
                             double l_pgG, double l_ganF,
                             double lambda1, double lambda2) {
    for (double v : {l_cyc, l_pgcyc, l_vgg, l_pgG, l_ganF})
        if (!std::isfinite(v))
            throw Error("total_from_components: non-finite component");
    return lambda1 * (l_cyc + l_pgcyc + l_vgg) + lambda2 * (l_pgG + l_ganF);
}

std::string loss_csv_header() {
    return "iter,l_cyc,l_pgcyc,l_vgg,l_pgG,l_ganF,l_dX,l_dY,total";
}

void append_loss_csv(const std::string& path, const LossReport& r) {
    bool fresh = !std::filesystem::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out)
        throw UserError("cannot append to " + path);
    if (fresh)
        out << loss_csv_header() << '\n';
    out.precision(10);
    out << r.iteration << ',' << r.l_cyc << ',' << r.l_pgcyc << ',' << r.l_vgg << ','
        << r.l_pgG << ',' << r.l_ganF << ',' << r.l_dX << ',' << r.l_dY << ','
        << r.total << '\n';
}

template <class T>
TensorT<T> tensor_from_prior(const PriorMap& pm) {
    TensorT<T> t({1, pm.height, pm.width});
    for (size_t i = 0; i < pm.data.size(); ++i)
        t.data[i] = static_cast<T>(pm.data[i]);
    return t;
}

template <class T>
Var<T> cycle_loss(const Var<T>& x, const Var<T>& fgx, const Var<T>& y, const Var<T>& gfy) {
    return ad::scalar_combine<T>(
        {{ad::mean_abs_diff(fgx, x), T(1)}, {ad::mean_abs_diff(gfy, y), T(1)}});
}

template <class T>
Var<T> pg_cycle_loss(const Var<T>& x, const Var<T>& fgx, const Var<T>& y, const Var<T>& gfy,
                     const TensorT<T>& pm_x, const TensorT<T>& pm_y) {
    return ad::scalar_combine<T>({{ad::mean_abs_diff_weighted(fgx, x, pm_x), T(1)},
                                  {ad::mean_abs_diff_weighted(gfy, y, pm_y), T(1)}});
}

template <class T>
Var<T> pg_gan_generator_loss(const Var<T>& dy_fake, const TensorT<T>& pm_x) {
    return ad::mean_sq_affine(dy_fake, pm_x, T(1));
}

template <class T>
Var<T> pg_gan_discriminator_loss(const Var<T>& dy_real, const Var<T>& dy_fake,
                                 const TensorT<T>& pm_x) {
    TensorT<T> empty;
    return ad::scalar_combine<T>({{ad::mean_sq_affine(dy_real, empty, T(1)), T(1)},
                                  {ad::mean_sq_affine(dy_fake, pm_x, T(0)), T(1)}});
}

template <class T>
Var<T> gan_generator_loss(const Var<T>& dx_fake) {
    TensorT<T> empty;
    return ad::mean_sq_affine(dx_fake, empty, T(1));
}

template <class T>
Var<T> gan_discriminator_loss(const Var<T>& dx_real, const Var<T>& dx_fake) {
    TensorT<T> empty;
    return ad::scalar_combine<T>({{ad::mean_sq_affine(dx_real, empty, T(1)), T(1)},
                                  {ad::mean_sq_affine(dx_fake, empty, T(0)), T(1)}});
}

template <class T>
Var<T> perceptual_loss(const Var<T>& x, const Var<T>& fgx, const Var<T>& y, const Var<T>& gfy,
                       const FeatureExtractorT<T>& extractor) {
    auto [x2, x5] = extractor.forward(x);
    auto [r2, r5] = extractor.forward(fgx);
    auto [y2, y5] = extractor.forward(y);
    auto [s2, s5] = extractor.forward(gfy);
    return ad::scalar_combine<T>({{ad::mean_sq_diff(x2, r2), T(1)},
                                  {ad::mean_sq_diff(x5, r5), T(1)},
                                  {ad::mean_sq_diff(y2, s2), T(1)},
                                  {ad::mean_sq_diff(y5, s5), T(1)}});
}

#define DEFOG_INSTANTIATE(T)                                                             \
    template ad::TensorT<T> tensor_from_prior<T>(const PriorMap&);                       \
    template Var<T> cycle_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&,           \
                                  const Var<T>&);                                        \
    template Var<T> pg_cycle_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&,        \
                                     const Var<T>&, const TensorT<T>&, const TensorT<T>&);\
    template Var<T> pg_gan_generator_loss<T>(const Var<T>&, const TensorT<T>&);          \
    template Var<T> pg_gan_discriminator_loss<T>(const Var<T>&, const Var<T>&,           \
                                                 const TensorT<T>&);                     \
    template Var<T> gan_generator_loss<T>(const Var<T>&);                                \
    template Var<T> gan_discriminator_loss<T>(const Var<T>&, const Var<T>&);             \
    template Var<T> perceptual_loss<T>(const Var<T>&, const Var<T>&, const Var<T>&,      \
                                       const Var<T>&, const FeatureExtractorT<T>&);

DEFOG_INSTANTIATE(float)
DEFOG_INSTANTIATE(double)

#undef DEFOG_INSTANTIATE

} // namespace defog
