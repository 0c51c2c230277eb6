#include "defog/image.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace fs = std::filesystem;

namespace defog {

bool Image::in_range(float slack) const {
    float lo = range_lo() - slack;
    float hi = range_hi() + slack;
    for (float v : data)
        if (!(v >= lo && v <= hi))
            return false;
    return true;
}

Image load_image(const std::string& path) {
    if (!fs::exists(path))
        throw UserError("missing file: " + path);
    cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
    if (m.empty())
        throw UserError("decode failure: " + path);
    if (m.rows < 1 || m.cols < 1)
        throw UserError("zero-size image: " + path);

    Image img(3, m.rows, m.cols, ValueRange::kUnit);
    const float inv = 1.0f / 255.0f;
    for (int y = 0; y < m.rows; ++y) {
        const cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < m.cols; ++x) {
            // OpenCV decodes BGR
            img.at(0, y, x) = row[x][2] * inv;
            img.at(1, y, x) = row[x][1] * inv;
            img.at(2, y, x) = row[x][0] * inv;
        }
    }
    return img;
}

void save_image(const Image& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3)
        throw Error("save_image: unsupported channel count");
    const Image& u = img.range == ValueRange::kSymm ? to_unit(img) : img;

    cv::Mat m(u.height, u.width, CV_8UC3);
    auto quant = [](float v) {
        v = std::clamp(v, 0.0f, 1.0f);
        return static_cast<uchar>(std::floor(v * 255.0f + 0.5f));
    };
    for (int y = 0; y < u.height; ++y) {
        cv::Vec3b* row = m.ptr<cv::Vec3b>(y);
        for (int x = 0; x < u.width; ++x) {
            uchar r = quant(u.at(0, y, x));
            uchar g = u.channels == 3 ? quant(u.at(1, y, x)) : r;
            uchar b = u.channels == 3 ? quant(u.at(2, y, x)) : r;
            row[x] = cv::Vec3b(b, g, r);
        }
    }
    std::vector<uchar> bytes;
    if (!cv::imencode(".png", m, bytes))
        throw Error("png encode failed");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw UserError("unwritable path: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out)
        throw UserError("write failed: " + path);
}

Image resize(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1)
        throw Error("resize: target size must be >= 1");
    if (out_h == img.height && out_w == img.width)
        return img;

    Image out(img.channels, out_h, out_w, img.range);
    const float sy = static_cast<float>(img.height) / out_h;
    const float sx = static_cast<float>(img.width) / out_w;
    for (int c = 0; c < img.channels; ++c) {
        for (int y = 0; y < out_h; ++y) {
            float fy = (y + 0.5f) * sy - 0.5f;
            int y0 = static_cast<int>(std::floor(fy));
            float wy = fy - y0;
            int ya = std::clamp(y0, 0, img.height - 1);
            int yb = std::clamp(y0 + 1, 0, img.height - 1);
            for (int x = 0; x < out_w; ++x) {
                float fx = (x + 0.5f) * sx - 0.5f;
                int x0 = static_cast<int>(std::floor(fx));
                float wx = fx - x0;
                int xa = std::clamp(x0, 0, img.width - 1);
                int xb = std::clamp(x0 + 1, 0, img.width - 1);
                float top = img.at(c, ya, xa) * (1.0f - wx) + img.at(c, ya, xb) * wx;
                float bot = img.at(c, yb, xa) * (1.0f - wx) + img.at(c, yb, xb) * wx;
                out.at(c, y, x) = top * (1.0f - wy) + bot * wy;
            }
        }
    }
    return out;
}

Image random_crop(const Image& img, int size, Rng& rng) {
    if (size < 1)
        throw Error("random_crop: size must be >= 1");
    if (size > img.height || size > img.width)
        throw Error("random_crop: size " + std::to_string(size) + " exceeds image " +
                    std::to_string(img.height) + "x" + std::to_string(img.width));
    int y0 = static_cast<int>(rng.uniform_below(static_cast<uint32_t>(img.height - size + 1)));
    int x0 = static_cast<int>(rng.uniform_below(static_cast<uint32_t>(img.width - size + 1)));

    Image out(img.channels, size, size, img.range);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < size; ++y)
            for (int x = 0; x < size; ++x)
                out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
    return out;
}

int mirror_index(int i, int n) {
    if (n == 1)
        return 0;
    // Fold into the period [0, 2n) then reflect the upper half.
    int period = 2 * n;
    i %= period;
    if (i < 0)
        i += period;
    return i < n ? i : period - 1 - i;
}

Image pad_to_multiple(const Image& img, int multiple) {
    if (multiple < 1)
        throw Error("pad_to_multiple: multiple must be >= 1");
    int ph = (multiple - img.height % multiple) % multiple;
    int pw = (multiple - img.width % multiple) % multiple;
    if (ph == 0 && pw == 0)
        return img;

    Image out(img.channels, img.height + ph, img.width + pw, img.range);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out.height; ++y) {
            int sy = mirror_index(y, img.height);
            for (int x = 0; x < out.width; ++x)
                out.at(c, y, x) = img.at(c, sy, mirror_index(x, img.width));
        }
    return out;
}

Image crop_to(const Image& img, int out_h, int out_w) {
    if (out_h > img.height || out_w > img.width)
        throw Error("crop_to: target larger than image");
    if (out_h == img.height && out_w == img.width)
        return img;
    Image out(img.channels, out_h, out_w, img.range);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < out_h; ++y)
            for (int x = 0; x < out_w; ++x)
                out.at(c, y, x) = img.at(c, y, x);
    return out;
}

Image downscale_by(const Image& img, int factor) {
    if (factor != 2 && factor != 4)
        throw Error("downscale_by: factor must be 2 or 4");
    Image padded = pad_to_multiple(img, factor);
    return resize(padded, padded.height / factor, padded.width / factor);
}

Image to_symm(const Image& img) {
    if (img.range == ValueRange::kSymm)
        return img;
    Image out = img;
    out.range = ValueRange::kSymm;
    for (float& v : out.data)
        v = v * 2.0f - 1.0f;
    return out;
}

Image to_unit(const Image& img) {
    if (img.range == ValueRange::kUnit)
        return img;
    Image out = img;
    out.range = ValueRange::kUnit;
    for (float& v : out.data)
        v = (v + 1.0f) * 0.5f;
    return out;
}

std::vector<std::string> list_image_files(const std::string& dir) {
    if (!fs::is_directory(dir))
        throw UserError("not a directory: " + dir);
    std::vector<std::string> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file())
            continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(),
                       [](unsigned char ch) { return std::tolower(ch); });
        if (ext == ".png" || ext == ".jpg" || ext == ".jpeg")
            out.push_back(entry.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace defog
