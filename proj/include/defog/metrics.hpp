#pragma once

#include <string>
#include <vector>

#include "defog/image.hpp"
#include "defog/priormap.hpp"

namespace defog {

struct PsnrResult {
    double db = 0.0;
    bool infinite = false; // identical inputs; db is meaningless then
};

// 10*log10(1/MSE) at peak 1.0 over all channels.
PsnrResult psnr(const Image& a, const Image& b);

// Structural similarity with the standard 11-tap Gaussian window (sigma 1.5),
// C1=0.01^2, C2=0.03^2, computed per channel over valid window positions and
// averaged. Sides must be >= 11.
double ssim(const Image& a, const Image& b);

// Mean dark-channel value; bright under fog, near zero for clean natural
// scenes, so it works as a no-reference fog-density score.
double fog_proxy(const Image& img, int window = 15);

struct EvalRow {
    std::string name;
    PsnrResult psnr;
    double ssim = 0.0;
    double fog = 0.0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_psnr = 0.0; // over finite rows
    double mean_ssim = 0.0;
    double mean_fog = 0.0;
    bool any_infinite = false;
};

EvalReport evaluate_pairs(const std::vector<std::string>& images,
                          const std::vector<std::string>& references);

// CSV schema: image,psnr_db,ssim,fog_proxy plus a trailing mean row.
void write_eval_csv(const EvalReport& report, const std::string& path);

} // namespace defog
