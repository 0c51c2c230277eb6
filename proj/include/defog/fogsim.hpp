#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "defog/image.hpp"

namespace defog {

enum class TransmissionMode { kConstant, kSmoothField };

// Inputs to the scattering model I = J*t + A*(1-t). Transmission values are
// kept in (0,1]; airlight per channel in [0,1].
struct FogParams {
    std::array<float, 3> airlight{0.9f, 0.9f, 0.9f};
    TransmissionMode t_mode = TransmissionMode::kSmoothField;
    float t_min = 0.3f;
    float t_max = 0.9f;
    uint64_t seed = 0;

    static FogParams constant(float t, float airlight_scalar = 0.9f) {
        FogParams p;
        p.t_mode = TransmissionMode::kConstant;
        p.t_min = p.t_max = t;
        p.airlight = {airlight_scalar, airlight_scalar, airlight_scalar};
        return p;
    }
};

// Scattering-model fogger. kConstant uses a single t (drawn in [t_min,t_max]
// when the ends differ); kSmoothField bilinearly upsamples a seeded 8x8
// uniform grid so the fog density varies smoothly over the frame. The output
// is a convex combination of the clean image and the airlight, so it stays
// in [0,1].
Image apply_fog(const Image& clean, const FogParams& params);

struct ManifestEntry {
    std::string role; // "foggy" or "clean"
    std::string path;
};

// Builds an unpaired training set from a directory of clean images: n_foggy
// sources are fogged (per-image seeded transmission fields), n_clean other
// sources are re-encoded as-is. No source contributes to both sides.
// Writes out_dir/foggy/*, out_dir/clean/* and out_dir/manifest.txt as
// role<TAB>path lines; returns the entries.
std::vector<ManifestEntry> make_unpaired_set(const std::string& clean_dir,
                                             const std::string& out_dir,
                                             int n_foggy, int n_clean,
                                             uint64_t seed,
                                             bool with_replacement = false);

} // namespace defog
