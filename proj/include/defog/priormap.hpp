#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "defog/image.hpp"

namespace defog {

// Per-pixel channel minimum, optionally min-filtered over a local window.
// window == 1 means no spatial filtering.
struct DarkChannel {
    int height = 0;
    int width = 0;
    int window = 1;
    std::vector<float> data;

    float& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    float at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

// Min-max normalized inverted dark channel. Objects on the water come out
// bright, sky and water come out dark, so it works as a per-pixel loss
// weight. For a constant input the normalization is undefined; we emit an
// all-ones map and set `degenerate`, which makes every prior-weighted loss
// fall back to its unweighted form.
struct PriorMap {
    int height = 0;
    int width = 0;
    bool degenerate = false;
    std::vector<float> data;

    float& at(int y, int x) { return data[static_cast<size_t>(y) * width + x]; }
    float at(int y, int x) const { return data[static_cast<size_t>(y) * width + x]; }
};

// Channel minimum followed by a window x window min filter with
// replicate-padded borders. window must be odd and >= 1; img must be kUnit
// 3-channel.
DarkChannel dark_channel(const Image& img, int window);

// 1 - per-pixel channel minimum (no min filter).
DarkChannel inverted_dark_channel(const Image& img);

// Min-max normalization of the inverted dark channel.
PriorMap prior_map(const Image& img);

// Element-wise v^gamma, gamma > 0.
DarkChannel gamma_enhance(const DarkChannel& dc, float gamma);

// 256-bin cumulative-distribution equalization; a constant map is returned
// unchanged.
DarkChannel hist_equalize(const DarkChannel& dc);

// Every image is resized to 256x256, its inverted dark channel computed
// (min-max normalized when `normalized`), and all pixels accumulated into
// `bins` equal-width bins over [0,1]. Unreadable files are skipped; it is an
// error if none survive.
std::vector<uint64_t> corpus_histogram(const std::vector<std::string>& paths,
                                       bool normalized, int bins);

Image prior_map_to_image(const PriorMap& pm);
Image dark_channel_to_image(const DarkChannel& dc);

// Blue-to-red false color for heatmap PNGs.
Image false_color(const PriorMap& pm);

} // namespace defog
