#include "defog/cascade.hpp"

namespace defog {

using ad::Var;

namespace {

template <class T>
void check_input(const Var<T>& x) {
    if (x->value.shape.size() != 3 || x->value.dim(0) != 3)
        throw Error("cascade: expected a 3xHxW input");
    if (x->value.dim(1) % 4 != 0 || x->value.dim(2) % 4 != 0)
        throw Error("cascade: sides must be multiples of 4, got " +
                    std::to_string(x->value.dim(1)) + "x" + std::to_string(x->value.dim(2)));
}

template <class T>
CascadeOutputT<T> run(const Var<T>& x, const GeneratorT<T>& g1, const GeneratorT<T>& g2,
                      const GeneratorT<T>& g3, bool coarse_to_fine) {
    check_input(x);
    const int h = x->value.dim(1), w = x->value.dim(2);

    CascadeOutputT<T> out;
    if (!coarse_to_fine) {
        out.finest = g3.forward(ad::concat_ch(x, x));
        out.coarse = out.finest;
        out.finer = out.finest;
        return out;
    }

    Var<T> x2 = ad::bilinear_resize(x, h / 2, w / 2);
    Var<T> x4 = ad::bilinear_resize(x, h / 4, w / 4);

    out.coarse = g1.forward(ad::concat_ch(x4, x4));
    Var<T> up_c = ad::bilinear_resize(out.coarse, h / 2, w / 2);
    out.finer = g2.forward(ad::concat_ch(x2, up_c));
    Var<T> up_f = ad::bilinear_resize(out.finer, h, w);
    out.finest = g3.forward(ad::concat_ch(x, up_f));
    return out;
}

} // namespace

template <class T>
CascadeOutputT<T> cascade_forward(const Var<T>& x, const GeneratorT<T>& gen,
                                  bool coarse_to_fine) {
    return run(x, gen, gen, gen, coarse_to_fine);
}

template <class T>
CascadeOutputT<T> cascade_forward_staged(const Var<T>& x, const GeneratorT<T>& g_coarse,
                                         const GeneratorT<T>& g_finer,
                                         const GeneratorT<T>& g_finest) {
    return run(x, g_coarse, g_finer, g_finest, true);
}

template CascadeOutputT<float> cascade_forward<float>(const Var<float>&,
                                                      const GeneratorT<float>&, bool);
template CascadeOutputT<double> cascade_forward<double>(const Var<double>&,
                                                        const GeneratorT<double>&, bool);
template CascadeOutputT<float> cascade_forward_staged<float>(const Var<float>&,
                                                             const GeneratorT<float>&,
                                                             const GeneratorT<float>&,
                                                             const GeneratorT<float>&);
template CascadeOutputT<double> cascade_forward_staged<double>(const Var<double>&,
                                                               const GeneratorT<double>&,
                                                               const GeneratorT<double>&,
                                                               const GeneratorT<double>&);

} // namespace defog
