#include "defog/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace defog {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* who) {
    if (a.height != b.height || a.width != b.width || a.channels != b.channels)
        throw Error(std::string(who) + ": shape mismatch");
}

} // namespace

PsnrResult psnr(const Image& a, const Image& b) {
    require_same_shape(a, b, "psnr");
    double se = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
        double d = static_cast<double>(a.data[i]) - b.data[i];
        se += d * d;
    }
    double mse = se / static_cast<double>(a.data.size());
    if (mse == 0.0)
        return {0.0, true};
    return {10.0 * std::log10(1.0 / mse), false};
}

double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b, "ssim");
    constexpr int kWin = 11;
    if (a.height < kWin || a.width < kWin)
        throw Error("ssim: image too small, need sides >= 11");

    // Normalized 11-tap Gaussian, sigma 1.5.
    double w[kWin];
    double wsum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        double d = i - 5.0;
        w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        wsum += w[i];
    }
    for (double& v : w)
        v /= wsum;

    constexpr double kC1 = 0.01 * 0.01;
    constexpr double kC2 = 0.03 * 0.03;
    const int oh = a.height - kWin + 1;
    const int ow = a.width - kWin + 1;

    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        // Separable weighted moments: horizontal pass, then vertical.
        size_t row_w = static_cast<size_t>(ow);
        std::vector<double> ha(row_w * a.height), hb(ha.size()), haa(ha.size()),
            hbb(ha.size()), hab(ha.size());
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < ow; ++x) {
                double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
                for (int k = 0; k < kWin; ++k) {
                    double va = a.at(c, y, x + k);
                    double vb = b.at(c, y, x + k);
                    sa += w[k] * va;
                    sb += w[k] * vb;
                    saa += w[k] * va * va;
                    sbb += w[k] * vb * vb;
                    sab += w[k] * va * vb;
                }
                size_t idx = static_cast<size_t>(y) * row_w + x;
                ha[idx] = sa;
                hb[idx] = sb;
                haa[idx] = saa;
                hbb[idx] = sbb;
                hab[idx] = sab;
            }
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x) {
                double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
                for (int k = 0; k < kWin; ++k) {
                    size_t idx = static_cast<size_t>(y + k) * row_w + x;
                    ma += w[k] * ha[idx];
                    mb += w[k] * hb[idx];
                    maa += w[k] * haa[idx];
                    mbb += w[k] * hbb[idx];
                    mab += w[k] * hab[idx];
                }
                double va = maa - ma * ma;
                double vb = mbb - mb * mb;
                double cov = mab - ma * mb;
                double num = (2.0 * ma * mb + kC1) * (2.0 * cov + kC2);
                double den = (ma * ma + mb * mb + kC1) * (va + vb + kC2);
                total += num / den;
            }
    }
    return total / (static_cast<double>(a.channels) * oh * ow);
}

double fog_proxy(const Image& img, int window) {
    DarkChannel dc = dark_channel(img, window);
    double s = 0.0;
    for (float v : dc.data)
        s += v;
    return s / static_cast<double>(dc.data.size());
}

EvalReport evaluate_pairs(const std::vector<std::string>& images,
                          const std::vector<std::string>& references) {
    if (images.size() != references.size())
        throw UserError("evaluate_pairs: image/reference count mismatch");
    if (images.empty())
        throw UserError("evaluate_pairs: nothing to evaluate");

    EvalReport rep;
    double psnr_sum = 0.0;
    int psnr_n = 0;
    for (size_t i = 0; i < images.size(); ++i) {
        Image a = load_image(images[i]);
        Image b = load_image(references[i]);
        if (a.height != b.height || a.width != b.width)
            b = resize(b, a.height, a.width);
        EvalRow row;
        row.name = std::filesystem::path(images[i]).filename().string();
        row.psnr = psnr(a, b);
        row.ssim = ssim(a, b);
        row.fog = fog_proxy(a);
        if (row.psnr.infinite) {
            rep.any_infinite = true;
        } else {
            psnr_sum += row.psnr.db;
            ++psnr_n;
        }
        rep.mean_ssim += row.ssim;
        rep.mean_fog += row.fog;
        rep.rows.push_back(std::move(row));
    }
    rep.mean_psnr = psnr_n > 0 ? psnr_sum / psnr_n : 0.0;
    rep.mean_ssim /= static_cast<double>(rep.rows.size());
    rep.mean_fog /= static_cast<double>(rep.rows.size());
    return rep;
}

void write_eval_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw UserError("cannot write " + path);
    out << "image,psnr_db,ssim,fog_proxy\n";
    for (const auto& r : report.rows) {
        out << r.name << ',';
        if (r.psnr.infinite)
            out << "inf";
        else
            out << r.psnr.db;
        out << ',' << r.ssim << ',' << r.fog << '\n';
    }
    out << "mean,";
    if (report.any_infinite && report.mean_psnr == 0.0)
        out << "inf";
    else
        out << report.mean_psnr;
    out << ',' << report.mean_ssim << ',' << report.mean_fog << '\n';
}

} // namespace defog
