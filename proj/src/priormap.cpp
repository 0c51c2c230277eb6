#include "defog/priormap.hpp"

#include <algorithm>
#include <cmath>

namespace defog {

namespace {

void require_unit_rgb(const Image& img, const char* who) {
    if (img.channels != 3)
        throw Error(std::string(who) + ": expected a 3-channel image");
    if (img.range != ValueRange::kUnit)
        throw Error(std::string(who) + ": expected a [0,1]-range image");
}

std::vector<float> channel_min(const Image& img) {
    std::vector<float> out(img.plane_size());
    const float* r = img.data.data();
    const float* g = r + img.plane_size();
    const float* b = g + img.plane_size();
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = std::min(r[i], std::min(g[i], b[i]));
    return out;
}

} // namespace

DarkChannel dark_channel(const Image& img, int window) {
    require_unit_rgb(img, "dark_channel");
    if (window < 1 || window % 2 == 0)
        throw Error("dark_channel: window must be odd and >= 1");

    DarkChannel dc;
    dc.height = img.height;
    dc.width = img.width;
    dc.window = window;
    dc.data = channel_min(img);
    if (window == 1)
        return dc;

    // Separable min filter: rows then columns, replicate borders.
    int r = window / 2;
    std::vector<float> tmp(dc.data.size());
    for (int y = 0; y < dc.height; ++y) {
        const float* row = dc.data.data() + static_cast<size_t>(y) * dc.width;
        for (int x = 0; x < dc.width; ++x) {
            float m = row[std::clamp(x - r, 0, dc.width - 1)];
            for (int k = -r + 1; k <= r; ++k)
                m = std::min(m, row[std::clamp(x + k, 0, dc.width - 1)]);
            tmp[static_cast<size_t>(y) * dc.width + x] = m;
        }
    }
    for (int x = 0; x < dc.width; ++x) {
        for (int y = 0; y < dc.height; ++y) {
            float m = tmp[static_cast<size_t>(std::clamp(y - r, 0, dc.height - 1)) * dc.width + x];
            for (int k = -r + 1; k <= r; ++k)
                m = std::min(m, tmp[static_cast<size_t>(std::clamp(y + k, 0, dc.height - 1)) * dc.width + x]);
            dc.data[static_cast<size_t>(y) * dc.width + x] = m;
        }
    }
    return dc;
}

DarkChannel inverted_dark_channel(const Image& img) {
    require_unit_rgb(img, "inverted_dark_channel");
    DarkChannel dc;
    dc.height = img.height;
    dc.width = img.width;
    dc.window = 1;
    dc.data = channel_min(img);
    for (float& v : dc.data)
        v = 1.0f - v;
    return dc;
}

PriorMap prior_map(const Image& img) {
    DarkChannel idc = inverted_dark_channel(img);
    PriorMap pm;
    pm.height = idc.height;
    pm.width = idc.width;

    float lo = idc.data[0];
    float hi = idc.data[0];
    for (float v : idc.data) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) {
        pm.degenerate = true;
        pm.data.assign(idc.data.size(), 1.0f);
        return pm;
    }
    pm.data.resize(idc.data.size());
    float span = hi - lo;
    for (size_t i = 0; i < idc.data.size(); ++i)
        pm.data[i] = (idc.data[i] - lo) / span;
    return pm;
}

DarkChannel gamma_enhance(const DarkChannel& dc, float gamma) {
    if (!(gamma > 0.0f))
        throw Error("gamma_enhance: gamma must be > 0");
    DarkChannel out = dc;
    for (float& v : out.data)
        v = std::pow(v, gamma);
    return out;
}

DarkChannel hist_equalize(const DarkChannel& dc) {
    uint64_t counts[256] = {};
    auto level = [](float v) {
        return std::clamp(static_cast<int>(std::floor(v * 255.0f + 0.5f)), 0, 255);
    };
    for (float v : dc.data)
        counts[level(v)]++;

    int lowest = 0;
    while (lowest < 255 && counts[lowest] == 0)
        ++lowest;
    int highest = 255;
    while (highest > 0 && counts[highest] == 0)
        --highest;
    if (lowest == highest)
        return dc; // single level, CDF degenerate

    double total = static_cast<double>(dc.data.size());
    double cdf[256];
    double acc = 0.0;
    for (int i = 0; i < 256; ++i) {
        acc += static_cast<double>(counts[i]);
        cdf[i] = acc / total;
    }
    DarkChannel out = dc;
    for (float& v : out.data)
        v = static_cast<float>(cdf[level(v)]);
    return out;
}

std::vector<uint64_t> corpus_histogram(const std::vector<std::string>& paths,
                                       bool normalized, int bins) {
    if (paths.empty())
        throw UserError("corpus_histogram: empty path list");
    if (bins < 1)
        throw Error("corpus_histogram: bins must be >= 1");

    std::vector<uint64_t> hist(static_cast<size_t>(bins), 0);
    int readable = 0;
    #pragma omp parallel
    {
        std::vector<uint64_t> local(static_cast<size_t>(bins), 0);
        int local_readable = 0;
        #pragma omp for schedule(dynamic) nowait
        for (size_t i = 0; i < paths.size(); ++i) {
            Image img;
            try {
                img = load_image(paths[i]);
            } catch (const Error&) {
                continue; // skipped; counted below
            }
            ++local_readable;
            img = resize(img, 256, 256);
            std::vector<float> values;
            if (normalized) {
                values = prior_map(img).data;
            } else {
                values = inverted_dark_channel(img).data;
            }
            for (float v : values) {
                int b = std::clamp(static_cast<int>(v * bins), 0, bins - 1);
                local[static_cast<size_t>(b)]++;
            }
        }
        #pragma omp critical
        {
            for (int b = 0; b < bins; ++b)
                hist[static_cast<size_t>(b)] += local[static_cast<size_t>(b)];
            readable += local_readable;
        }
    }
    if (readable == 0)
        throw UserError("corpus_histogram: no readable images");
    return hist;
}

Image prior_map_to_image(const PriorMap& pm) {
    Image img(1, pm.height, pm.width, ValueRange::kUnit);
    img.data = pm.data;
    return img;
}

Image dark_channel_to_image(const DarkChannel& dc) {
    Image img(1, dc.height, dc.width, ValueRange::kUnit);
    img.data = dc.data;
    return img;
}

Image false_color(const PriorMap& pm) {
    Image img(3, pm.height, pm.width, ValueRange::kUnit);
    for (int y = 0; y < pm.height; ++y)
        for (int x = 0; x < pm.width; ++x) {
            // Four-segment blue->cyan->yellow->red ramp.
            float v = std::clamp(pm.at(y, x), 0.0f, 1.0f) * 4.0f;
            float r = std::clamp(std::min(v - 1.5f, -v + 4.5f), 0.0f, 1.0f);
            float g = std::clamp(std::min(v - 0.5f, -v + 3.5f), 0.0f, 1.0f);
            float b = std::clamp(std::min(v + 0.5f, -v + 2.5f), 0.0f, 1.0f);
            img.at(0, y, x) = r;
            img.at(1, y, x) = g;
            img.at(2, y, x) = b;
        }
    return img;
}

} // namespace defog
