#pragma once

#include <string>
#include <utility>

#include "defog/autodiff.hpp"
#include "defog/perceptual.hpp"
#include "defog/priormap.hpp"

namespace defog {

// Where the prior map enters the adversarial loss for the defogging
// direction. kScore weights the discriminator's per-pixel output map (the
// default); kInput multiplies the generated image before the discriminator
// sees it; kNone drops the prior weighting (ablation).
enum class PriorWeighting { kScore, kInput, kNone };

PriorWeighting prior_weighting_from_string(const std::string& s);
std::string to_string(PriorWeighting pw);

// Per-iteration scalar losses. `total` follows
//   total = lambda1*(l_cyc + l_pgcyc + l_vgg) + lambda2*(l_pgG + l_ganF)
// where l_pgG and l_ganF are the generator-side adversarial terms; the
// discriminator losses l_dX / l_dY are optimized separately.
struct LossReport {
    long iteration = 0;
    double l_cyc = 0, l_pgcyc = 0, l_vgg = 0;
    double l_pgG = 0, l_ganF = 0;
    double l_dX = 0, l_dY = 0;
    double lambda1 = 1.0, lambda2 = 2.0;
    double total = 0;

    bool finite() const;
};

double total_from_components(double l_cyc, double l_pgcyc, double l_vgg,
                             double l_pgG, double l_ganF,
                             double lambda1, double lambda2);

// CSV log: header + one row per iteration.
// iter,l_cyc,l_pgcyc,l_vgg,l_pgG,l_ganF,l_dX,l_dY,total
void append_loss_csv(const std::string& path, const LossReport& report);
std::string loss_csv_header();

template <class T>
ad::TensorT<T> tensor_from_prior(const PriorMap& pm);

// ---- losses over graph vars ----------------------------------------------
// x/FGx and y/GFy are the two cycle directions, all 3xHxW in [-1,1].

// mean L1 of both reconstruction errors, summed.
template <class T>
ad::Var<T> cycle_loss(const ad::Var<T>& x, const ad::Var<T>& fgx,
                      const ad::Var<T>& y, const ad::Var<T>& gfy);

// prior-weighted mean L1 of both reconstruction errors. Maps broadcast
// across RGB and are treated as constants.
template <class T>
ad::Var<T> pg_cycle_loss(const ad::Var<T>& x, const ad::Var<T>& fgx,
                         const ad::Var<T>& y, const ad::Var<T>& gfy,
                         const ad::TensorT<T>& pm_x, const ad::TensorT<T>& pm_y);

// Least-squares adversarial pair for the defogging direction with the prior
// map applied to the fake-side score map:
//   generator:      mean((dY_fake .* pm - 1)^2)
//   discriminator:  mean((dY_real - 1)^2) + mean((dY_fake .* pm)^2)
// Pass an empty map for the unweighted form.
template <class T>
ad::Var<T> pg_gan_generator_loss(const ad::Var<T>& dy_fake, const ad::TensorT<T>& pm_x);
template <class T>
ad::Var<T> pg_gan_discriminator_loss(const ad::Var<T>& dy_real, const ad::Var<T>& dy_fake,
                                     const ad::TensorT<T>& pm_x);

// Unweighted least-squares pair for the fogging direction (F vs D_X).
template <class T>
ad::Var<T> gan_generator_loss(const ad::Var<T>& dx_fake);
template <class T>
ad::Var<T> gan_discriminator_loss(const ad::Var<T>& dx_real, const ad::Var<T>& dx_fake);

// Sum over the two tap points and both cycle directions of mean squared
// feature differences.
template <class T>
ad::Var<T> perceptual_loss(const ad::Var<T>& x, const ad::Var<T>& fgx,
                           const ad::Var<T>& y, const ad::Var<T>& gfy,
                           const FeatureExtractorT<T>& extractor);

} // namespace defog
