#pragma once

#include <string>
#include <vector>

#include "defog/error.hpp"
#include "defog/rng.hpp"

namespace defog {

// Declared value range of an image. Disk I/O and prior-map math run on
// kUnit [0,1]; network tensors run on kSymm [-1,1].
enum class ValueRange { kUnit, kSymm };

// Planar CHW float raster. Immutable by convention once built: operations
// return new images instead of mutating, so sharing across threads is safe.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    ValueRange range = ValueRange::kUnit;
    std::vector<float> data; // size == channels * height * width

    Image() = default;
    Image(int c, int h, int w, ValueRange r = ValueRange::kUnit)
        : height(h), width(w), channels(c), range(r),
          data(static_cast<size_t>(c) * h * w, 0.0f) {
        if (h < 1 || w < 1 || (c != 1 && c != 3))
            throw Error("Image: bad shape " + std::to_string(c) + "x" +
                        std::to_string(h) + "x" + std::to_string(w));
    }

    float& at(int c, int y, int x) {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }
    float at(int c, int y, int x) const {
        return data[(static_cast<size_t>(c) * height + y) * width + x];
    }

    size_t plane_size() const { return static_cast<size_t>(height) * width; }

    float range_lo() const { return range == ValueRange::kUnit ? 0.0f : -1.0f; }
    float range_hi() const { return 1.0f; }

    // True when every element lies inside the declared range (with slack for
    // float round-off at the boundaries).
    bool in_range(float slack = 0.0f) const;
};

// Decodes a PNG or JPEG file into a 3-channel kUnit image; 8-bit value v
// maps to v/255.
Image load_image(const std::string& path);

// Writes 8-bit PNG (no alpha) regardless of the path's extension. kSymm
// input is converted to kUnit first; quantization is round-half-up, so a
// load(save(x)) round trip moves every element by at most 1/255.
void save_image(const Image& img, const std::string& path);

// Bilinear resample with half-pixel centers and clamped edge taps.
Image resize(const Image& img, int out_h, int out_w);

// Contiguous size x size window; offsets are the generator's next two draws:
// y = uniform_below(h - size + 1), then x = uniform_below(w - size + 1).
Image random_crop(const Image& img, int size, Rng& rng);

// Resize to (h/factor, w/factor), reflect-padding bottom/right first when the
// sides do not divide. factor must be 2 or 4.
Image downscale_by(const Image& img, int factor);

// Reflect-pad (mirror including the edge row) on bottom/right up to the next
// multiple. No-op when already aligned.
Image pad_to_multiple(const Image& img, int multiple);

// Top-left crop, used to undo pad_to_multiple.
Image crop_to(const Image& img, int out_h, int out_w);

Image to_symm(const Image& img); // v -> v*2-1
Image to_unit(const Image& img); // v -> (v+1)/2

// Mirror an out-of-bounds index into [0, n). Edge-inclusive reflection.
int mirror_index(int i, int n);

// Sorted list of decodable image paths (*.png, *.jpg, *.jpeg) in a directory.
std::vector<std::string> list_image_files(const std::string& dir);

} // namespace defog
