#include "defog/fogsim.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace fs = std::filesystem;

namespace defog {

namespace {

Image transmission_field(const FogParams& p, int h, int w) {
    if (!(p.t_min > 0.0f) || p.t_max > 1.0f || p.t_min > p.t_max)
        throw Error("apply_fog: transmission range must lie in (0,1]");
    Rng rng(p.seed);
    Image t(1, h, w, ValueRange::kUnit);
    if (p.t_mode == TransmissionMode::kConstant) {
        float v = p.t_min == p.t_max ? p.t_min : rng.uniform(p.t_min, p.t_max);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    Image coarse(1, 8, 8, ValueRange::kUnit);
    for (float& v : coarse.data)
        v = rng.uniform(p.t_min, p.t_max);
    return resize(coarse, h, w);
}

} // namespace

Image apply_fog(const Image& clean, const FogParams& params) {
    if (clean.channels != 3)
        throw Error("apply_fog: expected a 3-channel image");
    if (clean.range != ValueRange::kUnit)
        throw Error("apply_fog: expected a [0,1]-range image");
    for (float a : params.airlight)
        if (a < 0.0f || a > 1.0f)
            throw Error("apply_fog: airlight must lie in [0,1]");

    Image t = transmission_field(params, clean.height, clean.width);
    Image out(3, clean.height, clean.width, ValueRange::kUnit);
    for (int c = 0; c < 3; ++c) {
        float a = params.airlight[static_cast<size_t>(c)];
        for (int y = 0; y < clean.height; ++y)
            for (int x = 0; x < clean.width; ++x) {
                float tv = t.at(0, y, x);
                out.at(c, y, x) = clean.at(c, y, x) * tv + a * (1.0f - tv);
            }
    }
    return out;
}

std::vector<ManifestEntry> make_unpaired_set(const std::string& clean_dir,
                                             const std::string& out_dir,
                                             int n_foggy, int n_clean,
                                             uint64_t seed,
                                             bool with_replacement) {
    if (n_foggy < 1 || n_clean < 1)
        throw UserError("make_unpaired_set: need n_foggy >= 1 and n_clean >= 1");
    std::vector<std::string> sources = list_image_files(clean_dir);
    if (sources.empty())
        throw UserError("make_unpaired_set: no images in " + clean_dir);

    Rng rng(seed);
    std::vector<size_t> order(sources.size());
    std::iota(order.begin(), order.end(), size_t{0});
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_below(static_cast<uint32_t>(i))]);

    // Foggy sources come first in the shuffled order, clean sources after,
    // so the two sides never share a source image.
    std::vector<size_t> foggy_src, clean_src;
    if (with_replacement) {
        size_t half = std::max<size_t>(1, order.size() / 2);
        if (order.size() < 2)
            throw UserError("make_unpaired_set: need at least 2 sources");
        for (int i = 0; i < n_foggy; ++i)
            foggy_src.push_back(order[rng.uniform_below(static_cast<uint32_t>(half))]);
        for (int i = 0; i < n_clean; ++i)
            clean_src.push_back(order[half + rng.uniform_below(static_cast<uint32_t>(order.size() - half))]);
    } else {
        if (static_cast<size_t>(n_foggy) + static_cast<size_t>(n_clean) > order.size())
            throw UserError("make_unpaired_set: " + std::to_string(n_foggy) + "+" +
                            std::to_string(n_clean) + " samples requested but only " +
                            std::to_string(order.size()) + " sources available");
        foggy_src.assign(order.begin(), order.begin() + n_foggy);
        clean_src.assign(order.begin() + n_foggy, order.begin() + n_foggy + n_clean);
    }

    fs::create_directories(fs::path(out_dir) / "foggy");
    fs::create_directories(fs::path(out_dir) / "clean");

    std::vector<ManifestEntry> manifest;
    for (size_t i = 0; i < foggy_src.size(); ++i) {
        Image clean = load_image(sources[foggy_src[i]]);
        FogParams p;
        p.seed = Rng::derived(seed, 0x666f67, i).next_u32();
        Image foggy = apply_fog(clean, p);
        std::string name = "foggy_" + std::to_string(i) + ".png";
        std::string path = (fs::path(out_dir) / "foggy" / name).string();
        save_image(foggy, path);
        manifest.push_back({"foggy", path});
    }
    for (size_t i = 0; i < clean_src.size(); ++i) {
        Image clean = load_image(sources[clean_src[i]]);
        std::string name = "clean_" + std::to_string(i) + ".png";
        std::string path = (fs::path(out_dir) / "clean" / name).string();
        save_image(clean, path);
        manifest.push_back({"clean", path});
    }

    std::ofstream mf(fs::path(out_dir) / "manifest.txt");
    if (!mf)
        throw UserError("make_unpaired_set: cannot write manifest in " + out_dir);
    for (const auto& e : manifest)
        mf << e.role << '\t' << e.path << '\n';
    return manifest;
}

} // namespace defog
