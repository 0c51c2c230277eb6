#pragma once

#include "defog/networks.hpp"

namespace defog {

template <class T>
struct CascadeOutputT {
    ad::Var<T> coarse; // 1/4 scale
    ad::Var<T> finer;  // 1/2 scale
    ad::Var<T> finest; // full scale; the final defogged result
};

// Three-stage coarse-to-fine pass with one shared generator:
//   coarse = G([x/4 || x/4])
//   finer  = G([x/2 || up2(coarse)])
//   finest = G([x   || up2(finer)])
// Input sides must be multiples of 4 so the scales are exact. With
// coarse_to_fine disabled (ablation), a single pass G([x || x]) fills all
// three outputs.
template <class T>
CascadeOutputT<T> cascade_forward(const ad::Var<T>& x, const GeneratorT<T>& gen,
                                  bool coarse_to_fine = true);

// Per-stage-weights experiment: one generator per stage, coarse first.
template <class T>
CascadeOutputT<T> cascade_forward_staged(const ad::Var<T>& x,
                                         const GeneratorT<T>& g_coarse,
                                         const GeneratorT<T>& g_finer,
                                         const GeneratorT<T>& g_finest);

using CascadeOutput = CascadeOutputT<float>;

} // namespace defog
