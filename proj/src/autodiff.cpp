#include "defog/autodiff.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace defog::ad {

namespace {

thread_local bool g_grad_enabled = true;

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatRM<T>>;
template <class T>
using MapCM = Eigen::Map<const MatRM<T>>;

// Reusable scratch for im2col buffers; backward recomputes columns instead
// of keeping them alive in the graph.
template <class T>
std::vector<T>& scratch(int which) {
    thread_local std::vector<T> bufs[3];
    return bufs[which];
}

struct ConvGeom {
    int channels, in_h, in_w, kh, kw, stride, pad, out_h, out_w;

    ConvGeom(int c, int h, int w, int kh_, int kw_, int s, int p)
        : channels(c), in_h(h), in_w(w), kh(kh_), kw(kw_), stride(s), pad(p) {
        out_h = (h + 2 * p - kh_) / s + 1;
        out_w = (w + 2 * p - kw_) / s + 1;
        if (out_h < 1 || out_w < 1)
            throw Error("conv: output would be empty (input " + std::to_string(h) + "x" +
                        std::to_string(w) + ", kernel " + std::to_string(kh_) + ")");
    }

    long cols_rows() const { return static_cast<long>(channels) * kh * kw; }
    long cols_cols() const { return static_cast<long>(out_h) * out_w; }
};

template <class T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
    const long n = g.cols_cols();
    for (int c = 0; c < g.channels; ++c) {
        const T* xc = x + static_cast<size_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                T* row = cols + (static_cast<size_t>(c) * g.kh * g.kw +
                                 static_cast<size_t>(ky) * g.kw + kx) * n;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    int iy = oy * g.stride - g.pad + ky;
                    T* dst = row + static_cast<size_t>(oy) * g.out_w;
                    if (iy < 0 || iy >= g.in_h) {
                        std::fill(dst, dst + g.out_w, T(0));
                        continue;
                    }
                    const T* src = xc + static_cast<size_t>(iy) * g.in_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        int ix = ox * g.stride - g.pad + kx;
                        dst[ox] = (ix >= 0 && ix < g.in_w) ? src[ix] : T(0);
                    }
                }
            }
    }
}

template <class T>
void col2im_add(const T* cols, const ConvGeom& g, T* x) {
    const long n = g.cols_cols();
    for (int c = 0; c < g.channels; ++c) {
        T* xc = x + static_cast<size_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                const T* row = cols + (static_cast<size_t>(c) * g.kh * g.kw +
                                       static_cast<size_t>(ky) * g.kw + kx) * n;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.in_h)
                        continue;
                    T* dst = xc + static_cast<size_t>(iy) * g.in_w;
                    const T* src = row + static_cast<size_t>(oy) * g.out_w;
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        int ix = ox * g.stride - g.pad + kx;
                        if (ix >= 0 && ix < g.in_w)
                            dst[ix] += src[ox];
                    }
                }
            }
    }
}

template <class T>
Var<T> make_op(TensorT<T> value, std::vector<Var<T>> parents,
               std::function<void(NodeT<T>&)> backfn) {
    auto n = std::make_shared<NodeT<T>>();
    n->value = std::move(value);
    bool need = g_grad_enabled;
    if (need) {
        need = false;
        for (const auto& p : parents)
            if (p && p->requires_grad) {
                need = true;
                break;
            }
    }
    if (need) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backfn = std::move(backfn);
    }
    return n;
}

template <class T>
void accumulate(const Var<T>& p, const T* src, size_t count) {
    if (!p->requires_grad)
        return;
    p->ensure_grad();
    T* dst = p->grad.ptr();
    for (size_t i = 0; i < count; ++i)
        dst[i] += src[i];
}

void check3d(const std::vector<int>& s, const char* who) {
    if (s.size() != 3)
        throw Error(std::string(who) + ": expected a CxHxW tensor");
}

} // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved; }

template <class T>
void backward(const Var<T>& root) {
    if (root->value.numel() != 1)
        throw Error("backward: root must be scalar");
    if (!root->requires_grad)
        throw Error("backward: root does not require grad");

    // Post-order DFS; reversed it yields a topological order from root.
    std::vector<Var<T>> topo;
    std::unordered_set<const NodeT<T>*> seen;
    std::vector<std::pair<Var<T>, size_t>> stack;
    stack.push_back({root, 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Var<T> p = node->parents[next++];
            if (p->requires_grad && p->backfn && !seen.count(p.get())) {
                seen.insert(p.get());
                stack.push_back({p, 0});
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.data[0] = T(1);
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        NodeT<T>& node = **it;
        if (!node.backfn)
            continue;
        node.ensure_grad();
        node.backfn(node);
        node.zero_grad();          // consumed
        node.backfn = nullptr;     // free captured tensors early
    }
}

// ---- convolution ---------------------------------------------------------

template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, const Var<T>& b, int stride, int pad) {
    check3d(x->value.shape, "conv2d");
    if (w->value.shape.size() != 4)
        throw Error("conv2d: weight must be OCxICxKHxKW");
    const int ic = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
    const int oc = w->value.dim(0), kh = w->value.dim(2), kw = w->value.dim(3);
    if (w->value.dim(1) != ic)
        throw Error("conv2d: input has " + std::to_string(ic) + " channels, weight expects " +
                    std::to_string(w->value.dim(1)));
    if (b->value.numel() != oc)
        throw Error("conv2d: bias size mismatch");

    ConvGeom g(ic, h, wd, kh, kw, stride, pad);
    const long n = g.cols_cols();
    const long k = g.cols_rows();
    TensorT<T> out({oc, g.out_h, g.out_w});

    const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
    if (pointwise) {
        MapCM<T> wm(w->value.ptr(), oc, ic);
        MapCM<T> xm(x->value.ptr(), ic, n);
        MapM<T> ym(out.ptr(), oc, n);
        ym.noalias() = wm * xm;
    } else {
        auto& cols = scratch<T>(0);
        cols.resize(static_cast<size_t>(k) * n);
        im2col(x->value.ptr(), g, cols.data());
        MapCM<T> wm(w->value.ptr(), oc, k);
        MapCM<T> cm(cols.data(), k, n);
        MapM<T> ym(out.ptr(), oc, n);
        ym.noalias() = wm * cm;
    }
    for (int c = 0; c < oc; ++c) {
        T bv = b->value.data[static_cast<size_t>(c)];
        T* row = out.ptr() + static_cast<size_t>(c) * n;
        for (long i = 0; i < n; ++i)
            row[i] += bv;
    }

    return make_op<T>(std::move(out), {x, w, b}, [x, w, b, g, pointwise](NodeT<T>& self) {
        const int oc = w->value.dim(0);
        const long n = g.cols_cols();
        const long k = g.cols_rows();
        MapCM<T> dym(self.grad.ptr(), oc, n);

        if (b->requires_grad) {
            b->ensure_grad();
            for (int c = 0; c < oc; ++c)
                b->grad.data[static_cast<size_t>(c)] +=
                    dym.row(c).template cast<T>().sum();
        }
        if (pointwise) {
            const int ic = g.channels;
            if (w->requires_grad) {
                w->ensure_grad();
                MapCM<T> xm(x->value.ptr(), ic, n);
                MapM<T> dwm(w->grad.ptr(), oc, ic);
                dwm.noalias() += dym * xm.transpose();
            }
            if (x->requires_grad) {
                x->ensure_grad();
                MapCM<T> wm(w->value.ptr(), oc, ic);
                MapM<T> dxm(x->grad.ptr(), ic, n);
                dxm.noalias() += wm.transpose() * dym;
            }
            return;
        }
        if (w->requires_grad) {
            w->ensure_grad();
            auto& cols = scratch<T>(0);
            cols.resize(static_cast<size_t>(k) * n);
            im2col(x->value.ptr(), g, cols.data());
            MapCM<T> cm(cols.data(), k, n);
            MapM<T> dwm(w->grad.ptr(), oc, k);
            dwm.noalias() += dym * cm.transpose();
        }
        if (x->requires_grad) {
            x->ensure_grad();
            auto& dcols = scratch<T>(1);
            dcols.resize(static_cast<size_t>(k) * n);
            MapCM<T> wm(w->value.ptr(), oc, k);
            MapM<T> dcm(dcols.data(), k, n);
            dcm.noalias() = wm.transpose() * dym;
            col2im_add(dcols.data(), g, x->grad.ptr());
        }
    });
}

template <class T>
Var<T> conv_transpose2d_x2(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    check3d(x->value.shape, "conv_transpose2d_x2");
    if (w->value.shape.size() != 4 || w->value.dim(2) != 3 || w->value.dim(3) != 3)
        throw Error("conv_transpose2d_x2: weight must be ICxOCx3x3");
    const int ic = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2);
    if (w->value.dim(0) != ic)
        throw Error("conv_transpose2d_x2: channel mismatch");
    const int oc = w->value.dim(1);
    if (b->value.numel() != oc)
        throw Error("conv_transpose2d_x2: bias size mismatch");

    // The output-side geometry: a stride-2 conv over the 2x output lands on
    // exactly the input grid.
    ConvGeom g(oc, 2 * h, 2 * wd, 3, 3, 2, 1);
    if (g.out_h != h || g.out_w != wd)
        throw Error("conv_transpose2d_x2: geometry bug");
    const long n = static_cast<long>(h) * wd;
    const long k = static_cast<long>(oc) * 9;

    auto& cols = scratch<T>(0);
    cols.resize(static_cast<size_t>(k) * n);
    {
        MapCM<T> wm(w->value.ptr(), ic, k);
        MapCM<T> xm(x->value.ptr(), ic, n);
        MapM<T> cm(cols.data(), k, n);
        cm.noalias() = wm.transpose() * xm;
    }
    TensorT<T> out({oc, 2 * h, 2 * wd});
    col2im_add(cols.data(), g, out.ptr());
    const long on = static_cast<long>(2 * h) * (2 * wd);
    for (int c = 0; c < oc; ++c) {
        T bv = b->value.data[static_cast<size_t>(c)];
        T* row = out.ptr() + static_cast<size_t>(c) * on;
        for (long i = 0; i < on; ++i)
            row[i] += bv;
    }

    return make_op<T>(std::move(out), {x, w, b}, [x, w, b, g](NodeT<T>& self) {
        const int ic = x->value.dim(0);
        const int oc = g.channels;
        const long n = g.cols_cols();
        const long k = static_cast<long>(oc) * 9;
        const long on = static_cast<long>(g.in_h) * g.in_w;

        if (b->requires_grad) {
            b->ensure_grad();
            for (int c = 0; c < oc; ++c) {
                const T* row = self.grad.ptr() + static_cast<size_t>(c) * on;
                T s = 0;
                for (long i = 0; i < on; ++i)
                    s += row[i];
                b->grad.data[static_cast<size_t>(c)] += s;
            }
        }
        auto& dcols = scratch<T>(1);
        dcols.resize(static_cast<size_t>(k) * n);
        im2col(self.grad.ptr(), g, dcols.data());
        MapCM<T> dcm(dcols.data(), k, n);
        if (x->requires_grad) {
            x->ensure_grad();
            MapCM<T> wm(w->value.ptr(), ic, k);
            MapM<T> dxm(x->grad.ptr(), ic, n);
            dxm.noalias() += wm * dcm;
        }
        if (w->requires_grad) {
            w->ensure_grad();
            MapCM<T> xm(x->value.ptr(), ic, n);
            MapM<T> dwm(w->grad.ptr(), ic, k);
            dwm.noalias() += xm * dcm.transpose();
        }
    });
}

// ---- shape ops -----------------------------------------------------------

template <class T>
Var<T> pixel_shuffle2(const Var<T>& x) {
    check3d(x->value.shape, "pixel_shuffle2");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (c % 4 != 0)
        throw Error("pixel_shuffle2: channels must divide by 4, got " + std::to_string(c));
    const int occ = c / 4;
    TensorT<T> out({occ, 2 * h, 2 * w});
    for (int ocn = 0; ocn < occ; ++ocn)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j) {
                const T* src = x->value.ptr() +
                               static_cast<size_t>(ocn * 4 + i * 2 + j) * h * w;
                for (int y = 0; y < h; ++y) {
                    T* dst = out.ptr() +
                             ((static_cast<size_t>(ocn) * 2 * h + 2 * y + i) * 2 * w) + j;
                    for (int xx = 0; xx < w; ++xx)
                        dst[2 * xx] = src[static_cast<size_t>(y) * w + xx];
                }
            }
    return make_op<T>(std::move(out), {x}, [x, occ, h, w](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        for (int ocn = 0; ocn < occ; ++ocn)
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j) {
                    T* dst = x->grad.ptr() +
                             static_cast<size_t>(ocn * 4 + i * 2 + j) * h * w;
                    for (int y = 0; y < h; ++y) {
                        const T* src = self.grad.ptr() +
                                       ((static_cast<size_t>(ocn) * 2 * h + 2 * y + i) * 2 * w) + j;
                        for (int xx = 0; xx < w; ++xx)
                            dst[static_cast<size_t>(y) * w + xx] += src[2 * xx];
                    }
                }
    });
}

namespace {

struct Tap {
    int a, b;
    double wb; // weight of tap b; tap a gets 1-wb
};

inline Tap resize_tap(int out_i, int in_n, double scale) {
    double f = (out_i + 0.5) * scale - 0.5;
    int i0 = static_cast<int>(std::floor(f));
    double t = f - i0;
    Tap tap;
    tap.a = std::clamp(i0, 0, in_n - 1);
    tap.b = std::clamp(i0 + 1, 0, in_n - 1);
    tap.wb = t;
    return tap;
}

} // namespace

template <class T>
Var<T> bilinear_resize(const Var<T>& x, int out_h, int out_w) {
    check3d(x->value.shape, "bilinear_resize");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (out_h < 1 || out_w < 1)
        throw Error("bilinear_resize: bad target size");

    const double sy = static_cast<double>(h) / out_h;
    const double sx = static_cast<double>(w) / out_w;
    std::vector<Tap> ty(static_cast<size_t>(out_h)), tx(static_cast<size_t>(out_w));
    for (int i = 0; i < out_h; ++i)
        ty[static_cast<size_t>(i)] = resize_tap(i, h, sy);
    for (int i = 0; i < out_w; ++i)
        tx[static_cast<size_t>(i)] = resize_tap(i, w, sx);

    TensorT<T> out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch) {
        const T* src = x->value.ptr() + static_cast<size_t>(ch) * h * w;
        T* dst = out.ptr() + static_cast<size_t>(ch) * out_h * out_w;
        for (int y = 0; y < out_h; ++y) {
            const Tap& a = ty[static_cast<size_t>(y)];
            for (int xx = 0; xx < out_w; ++xx) {
                const Tap& bb = tx[static_cast<size_t>(xx)];
                double top = src[static_cast<size_t>(a.a) * w + bb.a] * (1.0 - bb.wb) +
                             src[static_cast<size_t>(a.a) * w + bb.b] * bb.wb;
                double bot = src[static_cast<size_t>(a.b) * w + bb.a] * (1.0 - bb.wb) +
                             src[static_cast<size_t>(a.b) * w + bb.b] * bb.wb;
                dst[static_cast<size_t>(y) * out_w + xx] =
                    static_cast<T>(top * (1.0 - a.wb) + bot * a.wb);
            }
        }
    }
    return make_op<T>(std::move(out), {x},
                      [x, ty = std::move(ty), tx = std::move(tx), c, h, w, out_h, out_w](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            T* dst = x->grad.ptr() + static_cast<size_t>(ch) * h * w;
            const T* src = self.grad.ptr() + static_cast<size_t>(ch) * out_h * out_w;
            for (int y = 0; y < out_h; ++y) {
                const Tap& a = ty[static_cast<size_t>(y)];
                for (int xx = 0; xx < out_w; ++xx) {
                    const Tap& bb = tx[static_cast<size_t>(xx)];
                    T gv = src[static_cast<size_t>(y) * out_w + xx];
                    dst[static_cast<size_t>(a.a) * w + bb.a] +=
                        gv * static_cast<T>((1.0 - a.wb) * (1.0 - bb.wb));
                    dst[static_cast<size_t>(a.a) * w + bb.b] +=
                        gv * static_cast<T>((1.0 - a.wb) * bb.wb);
                    dst[static_cast<size_t>(a.b) * w + bb.a] +=
                        gv * static_cast<T>(a.wb * (1.0 - bb.wb));
                    dst[static_cast<size_t>(a.b) * w + bb.b] +=
                        gv * static_cast<T>(a.wb * bb.wb);
                }
            }
        }
    });
}

// ---- normalization and activations ---------------------------------------

template <class T>
Var<T> instance_norm(const Var<T>& x, T eps) {
    check3d(x->value.shape, "instance_norm");
    const int c = x->value.dim(0);
    const long plane = static_cast<long>(x->value.dim(1)) * x->value.dim(2);

    TensorT<T> out(x->value.shape);
    std::vector<T> inv_std(static_cast<size_t>(c));
    for (int ch = 0; ch < c; ++ch) {
        const T* src = x->value.ptr() + static_cast<size_t>(ch) * plane;
        double mean = 0;
        for (long i = 0; i < plane; ++i)
            mean += src[i];
        mean /= static_cast<double>(plane);
        double var = 0;
        for (long i = 0; i < plane; ++i) {
            double d = src[i] - mean;
            var += d * d;
        }
        var /= static_cast<double>(plane);
        T is = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
        inv_std[static_cast<size_t>(ch)] = is;
        T* dst = out.ptr() + static_cast<size_t>(ch) * plane;
        T m = static_cast<T>(mean);
        for (long i = 0; i < plane; ++i)
            dst[i] = (src[i] - m) * is;
    }
    return make_op<T>(std::move(out), {x}, [x, inv_std = std::move(inv_std), c, plane](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            const T* y = self.value.ptr() + static_cast<size_t>(ch) * plane;
            const T* dy = self.grad.ptr() + static_cast<size_t>(ch) * plane;
            T* dx = x->grad.ptr() + static_cast<size_t>(ch) * plane;
            double mean_dy = 0, mean_dyy = 0;
            for (long i = 0; i < plane; ++i) {
                mean_dy += dy[i];
                mean_dyy += dy[i] * static_cast<double>(y[i]);
            }
            mean_dy /= static_cast<double>(plane);
            mean_dyy /= static_cast<double>(plane);
            T is = inv_std[static_cast<size_t>(ch)];
            for (long i = 0; i < plane; ++i)
                dx[i] += is * static_cast<T>(dy[i] - mean_dy - y[i] * mean_dyy);
        }
    });
}

namespace {

template <class T, class F, class DF>
Var<T> unary_op(const Var<T>& x, F f, DF df_from_out) {
    TensorT<T> out(x->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = f(x->value.data[i]);
    return make_op<T>(std::move(out), {x}, [x, df_from_out](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            x->grad.data[i] += self.grad.data[i] *
                               df_from_out(x->value.data[i], self.value.data[i]);
    });
}

} // namespace

template <class T>
Var<T> relu(const Var<T>& x) {
    return unary_op<T>(x, [](T v) { return v > T(0) ? v : T(0); },
                       [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <class T>
Var<T> leaky_relu(const Var<T>& x, T slope) {
    return unary_op<T>(x, [slope](T v) { return v > T(0) ? v : slope * v; },
                       [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <class T>
Var<T> tanh_op(const Var<T>& x) {
    return unary_op<T>(x, [](T v) { return std::tanh(v); },
                       [](T, T y) { return T(1) - y * y; });
}

template <class T>
Var<T> sigmoid_op(const Var<T>& x) {
    return unary_op<T>(x, [](T v) { return T(1) / (T(1) + std::exp(-v)); },
                       [](T, T y) { return y * (T(1) - y); });
}

template <class T>
Var<T> clamp_op(const Var<T>& x, T lo, T hi) {
    return unary_op<T>(x, [lo, hi](T v) { return std::clamp(v, lo, hi); },
                       [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

// ---- arithmetic -----------------------------------------------------------

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value))
        throw Error("add: shape mismatch");
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a->value.data[i] + b->value.data[i];
    return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& self) {
        accumulate(a, self.grad.ptr(), self.grad.data.size());
        accumulate(b, self.grad.ptr(), self.grad.data.size());
    });
}

template <class T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value))
        throw Error("sub: shape mismatch");
    TensorT<T> out(a->value.shape);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = a->value.data[i] - b->value.data[i];
    return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& self) {
        accumulate(a, self.grad.ptr(), self.grad.data.size());
        if (b->requires_grad) {
            b->ensure_grad();
            for (size_t i = 0; i < self.grad.data.size(); ++i)
                b->grad.data[i] -= self.grad.data[i];
        }
    });
}

namespace {

template <class T>
const T* broadcast_map(const TensorT<T>& map, const std::vector<int>& xshape, const char* who) {
    long plane = static_cast<long>(xshape[1]) * xshape[2];
    bool ok = (map.shape.size() == 2 && map.dim(0) == xshape[1] && map.dim(1) == xshape[2]) ||
              (map.shape.size() == 3 && map.dim(0) == 1 && map.dim(1) == xshape[1] &&
               map.dim(2) == xshape[2]);
    if (!ok || map.numel() != plane)
        throw Error(std::string(who) + ": weight map must be 1xHxW matching the input");
    return map.ptr();
}

} // namespace

template <class T>
Var<T> mul_map(const Var<T>& x, const TensorT<T>& map) {
    check3d(x->value.shape, "mul_map");
    const T* m = broadcast_map(map, x->value.shape, "mul_map");
    const int c = x->value.dim(0);
    const long plane = static_cast<long>(x->value.dim(1)) * x->value.dim(2);
    TensorT<T> out(x->value.shape);
    for (int ch = 0; ch < c; ++ch) {
        const T* src = x->value.ptr() + static_cast<size_t>(ch) * plane;
        T* dst = out.ptr() + static_cast<size_t>(ch) * plane;
        for (long i = 0; i < plane; ++i)
            dst[i] = src[i] * m[i];
    }
    return make_op<T>(std::move(out), {x}, [x, map, c, plane](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        const T* m = map.ptr();
        for (int ch = 0; ch < c; ++ch) {
            const T* g = self.grad.ptr() + static_cast<size_t>(ch) * plane;
            T* dx = x->grad.ptr() + static_cast<size_t>(ch) * plane;
            for (long i = 0; i < plane; ++i)
                dx[i] += g[i] * m[i];
        }
    });
}

template <class T>
Var<T> concat_ch(const Var<T>& a, const Var<T>& b) {
    check3d(a->value.shape, "concat_ch");
    check3d(b->value.shape, "concat_ch");
    if (a->value.dim(1) != b->value.dim(1) || a->value.dim(2) != b->value.dim(2))
        throw Error("concat_ch: spatial mismatch");
    const int ca = a->value.dim(0), cb = b->value.dim(0);
    TensorT<T> out({ca + cb, a->value.dim(1), a->value.dim(2)});
    std::copy(a->value.data.begin(), a->value.data.end(), out.data.begin());
    std::copy(b->value.data.begin(), b->value.data.end(),
              out.data.begin() + a->value.numel());
    return make_op<T>(std::move(out), {a, b}, [a, b](NodeT<T>& self) {
        accumulate(a, self.grad.ptr(), a->value.data.size());
        accumulate(b, self.grad.ptr() + a->value.data.size(), b->value.data.size());
    });
}

template <class T>
Var<T> slice_ch(const Var<T>& x, int c0, int c1) {
    check3d(x->value.shape, "slice_ch");
    if (c0 < 0 || c1 > x->value.dim(0) || c0 >= c1)
        throw Error("slice_ch: bad channel range");
    const long plane = static_cast<long>(x->value.dim(1)) * x->value.dim(2);
    TensorT<T> out({c1 - c0, x->value.dim(1), x->value.dim(2)});
    std::copy(x->value.data.begin() + c0 * plane, x->value.data.begin() + c1 * plane,
              out.data.begin());
    return make_op<T>(std::move(out), {x}, [x, c0, plane](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        T* dst = x->grad.ptr() + static_cast<size_t>(c0) * plane;
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            dst[i] += self.grad.data[i];
    });
}

namespace {

inline int mirror(int i, int n) {
    if (n == 1)
        return 0;
    int period = 2 * n;
    i %= period;
    if (i < 0)
        i += period;
    return i < n ? i : period - 1 - i;
}

} // namespace

template <class T>
Var<T> pad_reflect(const Var<T>& x, int top, int bottom, int left, int right) {
    check3d(x->value.shape, "pad_reflect");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int oh = h + top + bottom, ow = w + left + right;
    TensorT<T> out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch) {
        const T* src = x->value.ptr() + static_cast<size_t>(ch) * h * w;
        T* dst = out.ptr() + static_cast<size_t>(ch) * oh * ow;
        for (int y = 0; y < oh; ++y) {
            int sy = mirror(y - top, h);
            for (int xx = 0; xx < ow; ++xx)
                dst[static_cast<size_t>(y) * ow + xx] =
                    src[static_cast<size_t>(sy) * w + mirror(xx - left, w)];
        }
    }
    return make_op<T>(std::move(out), {x}, [x, c, h, w, oh, ow, top, left](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            const T* src = self.grad.ptr() + static_cast<size_t>(ch) * oh * ow;
            T* dst = x->grad.ptr() + static_cast<size_t>(ch) * h * w;
            for (int y = 0; y < oh; ++y) {
                int sy = mirror(y - top, h);
                for (int xx = 0; xx < ow; ++xx)
                    dst[static_cast<size_t>(sy) * w + mirror(xx - left, w)] +=
                        src[static_cast<size_t>(y) * ow + xx];
            }
        }
    });
}

template <class T>
Var<T> crop_spatial(const Var<T>& x, int y0, int x0, int out_h, int out_w) {
    check3d(x->value.shape, "crop_spatial");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    if (y0 < 0 || x0 < 0 || y0 + out_h > h || x0 + out_w > w)
        throw Error("crop_spatial: window out of bounds");
    TensorT<T> out({c, out_h, out_w});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < out_h; ++y) {
            const T* src = x->value.ptr() +
                           (static_cast<size_t>(ch) * h + y0 + y) * w + x0;
            std::copy(src, src + out_w,
                      out.ptr() + (static_cast<size_t>(ch) * out_h + y) * out_w);
        }
    return make_op<T>(std::move(out), {x}, [x, c, h, w, y0, x0, out_h, out_w](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < out_h; ++y) {
                const T* src = self.grad.ptr() +
                               (static_cast<size_t>(ch) * out_h + y) * out_w;
                T* dst = x->grad.ptr() + (static_cast<size_t>(ch) * h + y0 + y) * w + x0;
                for (int xx = 0; xx < out_w; ++xx)
                    dst[xx] += src[xx];
            }
    });
}

template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    check3d(x->value.shape, "global_avg_pool");
    const int c = x->value.dim(0);
    const long plane = static_cast<long>(x->value.dim(1)) * x->value.dim(2);
    TensorT<T> out({c});
    for (int ch = 0; ch < c; ++ch) {
        const T* src = x->value.ptr() + static_cast<size_t>(ch) * plane;
        double s = 0;
        for (long i = 0; i < plane; ++i)
            s += src[i];
        out.data[static_cast<size_t>(ch)] = static_cast<T>(s / static_cast<double>(plane));
    }
    return make_op<T>(std::move(out), {x}, [x, c, plane](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            T g = self.grad.data[static_cast<size_t>(ch)] / static_cast<T>(plane);
            T* dst = x->grad.ptr() + static_cast<size_t>(ch) * plane;
            for (long i = 0; i < plane; ++i)
                dst[i] += g;
        }
    });
}

template <class T>
Var<T> linear(const Var<T>& x, const Var<T>& w, const Var<T>& b) {
    if (x->value.shape.size() != 1 || w->value.shape.size() != 2)
        throw Error("linear: expected vector input and 2-D weight");
    const int in = x->value.dim(0), out_n = w->value.dim(0);
    if (w->value.dim(1) != in || b->value.numel() != out_n)
        throw Error("linear: shape mismatch");
    TensorT<T> out({out_n});
    MapCM<T> wm(w->value.ptr(), out_n, in);
    Eigen::Map<const Eigen::Vector<T, Eigen::Dynamic>> xv(x->value.ptr(), in);
    Eigen::Map<Eigen::Vector<T, Eigen::Dynamic>> yv(out.ptr(), out_n);
    yv.noalias() = wm * xv;
    for (int i = 0; i < out_n; ++i)
        out.data[static_cast<size_t>(i)] += b->value.data[static_cast<size_t>(i)];
    return make_op<T>(std::move(out), {x, w, b}, [x, w, b, in, out_n](NodeT<T>& self) {
        Eigen::Map<const Eigen::Vector<T, Eigen::Dynamic>> dy(self.grad.ptr(), out_n);
        if (b->requires_grad) {
            b->ensure_grad();
            Eigen::Map<Eigen::Vector<T, Eigen::Dynamic>> db(b->grad.ptr(), out_n);
            db.noalias() += dy;
        }
        if (w->requires_grad) {
            w->ensure_grad();
            Eigen::Map<const Eigen::Vector<T, Eigen::Dynamic>> xv(x->value.ptr(), in);
            MapM<T> dwm(w->grad.ptr(), out_n, in);
            dwm.noalias() += dy * xv.transpose();
        }
        if (x->requires_grad) {
            x->ensure_grad();
            MapCM<T> wm(w->value.ptr(), out_n, in);
            Eigen::Map<Eigen::Vector<T, Eigen::Dynamic>> dx(x->grad.ptr(), in);
            dx.noalias() += wm.transpose() * dy;
        }
    });
}

template <class T>
Var<T> scale_channels(const Var<T>& x, const Var<T>& gates) {
    check3d(x->value.shape, "scale_channels");
    const int c = x->value.dim(0);
    if (gates->value.numel() != c)
        throw Error("scale_channels: gate count mismatch");
    const long plane = static_cast<long>(x->value.dim(1)) * x->value.dim(2);
    TensorT<T> out(x->value.shape);
    for (int ch = 0; ch < c; ++ch) {
        T g = gates->value.data[static_cast<size_t>(ch)];
        const T* src = x->value.ptr() + static_cast<size_t>(ch) * plane;
        T* dst = out.ptr() + static_cast<size_t>(ch) * plane;
        for (long i = 0; i < plane; ++i)
            dst[i] = src[i] * g;
    }
    return make_op<T>(std::move(out), {x, gates}, [x, gates, c, plane](NodeT<T>& self) {
        if (x->requires_grad) {
            x->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                T g = gates->value.data[static_cast<size_t>(ch)];
                const T* dy = self.grad.ptr() + static_cast<size_t>(ch) * plane;
                T* dx = x->grad.ptr() + static_cast<size_t>(ch) * plane;
                for (long i = 0; i < plane; ++i)
                    dx[i] += dy[i] * g;
            }
        }
        if (gates->requires_grad) {
            gates->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                const T* dy = self.grad.ptr() + static_cast<size_t>(ch) * plane;
                const T* xv = x->value.ptr() + static_cast<size_t>(ch) * plane;
                double s = 0;
                for (long i = 0; i < plane; ++i)
                    s += static_cast<double>(dy[i]) * xv[i];
                gates->grad.data[static_cast<size_t>(ch)] += static_cast<T>(s);
            }
        }
    });
}

template <class T>
Var<T> maxpool2(const Var<T>& x) {
    check3d(x->value.shape, "maxpool2");
    const int c = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2);
    const int oh = h >= 2 ? h / 2 : 1;
    const int ow = w >= 2 ? w / 2 : 1;
    TensorT<T> out({c, oh, ow});
    std::vector<int> argmax(out.data.size());
    for (int ch = 0; ch < c; ++ch) {
        const T* src = x->value.ptr() + static_cast<size_t>(ch) * h * w;
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                int y0 = std::min(oy * 2, h - 1), x0 = std::min(ox * 2, w - 1);
                int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
                int best = y0 * w + x0;
                T bv = src[best];
                int cands[3] = {y0 * w + x1, y1 * w + x0, y1 * w + x1};
                for (int idx : cands)
                    if (src[idx] > bv) {
                        bv = src[idx];
                        best = idx;
                    }
                size_t o = (static_cast<size_t>(ch) * oh + oy) * ow + ox;
                out.data[o] = bv;
                argmax[o] = ch * h * w + best;
            }
    }
    return make_op<T>(std::move(out), {x}, [x, argmax = std::move(argmax)](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        for (size_t i = 0; i < self.grad.data.size(); ++i)
            x->grad.data[static_cast<size_t>(argmax[i])] += self.grad.data[i];
    });
}

// ---- scalar reductions ----------------------------------------------------

template <class T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value))
        throw Error("mean_abs_diff: shape mismatch");
    const size_t n = a->value.data.size();
    double s = 0;
    for (size_t i = 0; i < n; ++i)
        s += std::abs(static_cast<double>(a->value.data[i]) - b->value.data[i]);
    TensorT<T> out({1});
    out.data[0] = static_cast<T>(s / static_cast<double>(n));
    return make_op<T>(std::move(out), {a, b}, [a, b, n](NodeT<T>& self) {
        T g = self.grad.data[0] / static_cast<T>(n);
        bool ga = a->requires_grad, gb = b->requires_grad;
        if (ga)
            a->ensure_grad();
        if (gb)
            b->ensure_grad();
        for (size_t i = 0; i < n; ++i) {
            T d = a->value.data[i] - b->value.data[i];
            T s = d > T(0) ? g : (d < T(0) ? -g : T(0));
            if (ga)
                a->grad.data[i] += s;
            if (gb)
                b->grad.data[i] -= s;
        }
    });
}

template <class T>
Var<T> mean_abs_diff_weighted(const Var<T>& a, const Var<T>& b, const TensorT<T>& map) {
    if (!a->value.same_shape(b->value))
        throw Error("mean_abs_diff_weighted: shape mismatch");
    check3d(a->value.shape, "mean_abs_diff_weighted");
    const T* m = broadcast_map(map, a->value.shape, "mean_abs_diff_weighted");
    const int c = a->value.dim(0);
    const long plane = static_cast<long>(a->value.dim(1)) * a->value.dim(2);
    const size_t n = a->value.data.size();
    double s = 0;
    for (int ch = 0; ch < c; ++ch) {
        const T* av = a->value.ptr() + static_cast<size_t>(ch) * plane;
        const T* bv = b->value.ptr() + static_cast<size_t>(ch) * plane;
        for (long i = 0; i < plane; ++i)
            s += std::abs((static_cast<double>(av[i]) - bv[i]) * m[i]);
    }
    TensorT<T> out({1});
    out.data[0] = static_cast<T>(s / static_cast<double>(n));
    return make_op<T>(std::move(out), {a, b}, [a, b, map, c, plane, n](NodeT<T>& self) {
        const T* m = map.ptr();
        T g = self.grad.data[0] / static_cast<T>(n);
        bool ga = a->requires_grad, gb = b->requires_grad;
        if (ga)
            a->ensure_grad();
        if (gb)
            b->ensure_grad();
        for (int ch = 0; ch < c; ++ch) {
            size_t off = static_cast<size_t>(ch) * plane;
            for (long i = 0; i < plane; ++i) {
                T z = (a->value.data[off + i] - b->value.data[off + i]) * m[i];
                T s = z > T(0) ? m[i] * g : (z < T(0) ? -m[i] * g : T(0));
                if (ga)
                    a->grad.data[off + i] += s;
                if (gb)
                    b->grad.data[off + i] -= s;
            }
        }
    });
}

template <class T>
Var<T> mean_sq_diff(const Var<T>& a, const Var<T>& b) {
    if (!a->value.same_shape(b->value))
        throw Error("mean_sq_diff: shape mismatch");
    const size_t n = a->value.data.size();
    double s = 0;
    for (size_t i = 0; i < n; ++i) {
        double d = static_cast<double>(a->value.data[i]) - b->value.data[i];
        s += d * d;
    }
    TensorT<T> out({1});
    out.data[0] = static_cast<T>(s / static_cast<double>(n));
    return make_op<T>(std::move(out), {a, b}, [a, b, n](NodeT<T>& self) {
        T g = T(2) * self.grad.data[0] / static_cast<T>(n);
        bool ga = a->requires_grad, gb = b->requires_grad;
        if (ga)
            a->ensure_grad();
        if (gb)
            b->ensure_grad();
        for (size_t i = 0; i < n; ++i) {
            T d = (a->value.data[i] - b->value.data[i]) * g;
            if (ga)
                a->grad.data[i] += d;
            if (gb)
                b->grad.data[i] -= d;
        }
    });
}

template <class T>
Var<T> mean_sq_affine(const Var<T>& x, const TensorT<T>& map, T target) {
    check3d(x->value.shape, "mean_sq_affine");
    const T* m = map.data.empty() ? nullptr
                                  : broadcast_map(map, x->value.shape, "mean_sq_affine");
    const int c = x->value.dim(0);
    const long plane = static_cast<long>(x->value.dim(1)) * x->value.dim(2);
    const size_t n = x->value.data.size();
    double s = 0;
    for (int ch = 0; ch < c; ++ch) {
        const T* xv = x->value.ptr() + static_cast<size_t>(ch) * plane;
        for (long i = 0; i < plane; ++i) {
            double z = static_cast<double>(xv[i]) * (m ? m[i] : T(1)) - target;
            s += z * z;
        }
    }
    TensorT<T> out({1});
    out.data[0] = static_cast<T>(s / static_cast<double>(n));
    return make_op<T>(std::move(out), {x}, [x, map, target, c, plane, n](NodeT<T>& self) {
        if (!x->requires_grad)
            return;
        x->ensure_grad();
        const T* m = map.data.empty() ? nullptr : map.ptr();
        T g = T(2) * self.grad.data[0] / static_cast<T>(n);
        for (int ch = 0; ch < c; ++ch) {
            size_t off = static_cast<size_t>(ch) * plane;
            for (long i = 0; i < plane; ++i) {
                T w = m ? m[i] : T(1);
                T z = x->value.data[off + i] * w - target;
                x->grad.data[off + i] += g * z * w;
            }
        }
    });
}

template <class T>
Var<T> scalar_combine(const std::vector<std::pair<Var<T>, T>>& terms) {
    if (terms.empty())
        throw Error("scalar_combine: no terms");
    double s = 0;
    std::vector<Var<T>> parents;
    for (const auto& [v, coeff] : terms) {
        if (v->value.numel() != 1)
            throw Error("scalar_combine: non-scalar term");
        s += static_cast<double>(coeff) * v->value.data[0];
        parents.push_back(v);
    }
    TensorT<T> out({1});
    out.data[0] = static_cast<T>(s);
    return make_op<T>(std::move(out), std::move(parents), [terms](NodeT<T>& self) {
        for (const auto& [v, coeff] : terms)
            if (v->requires_grad) {
                v->ensure_grad();
                v->grad.data[0] += coeff * self.grad.data[0];
            }
    });
}

template <class T>
T scalar_value(const Var<T>& v) {
    if (v->value.numel() != 1)
        throw Error("scalar_value: not a scalar");
    return v->value.data[0];
}

template <class T>
bool all_finite(const TensorT<T>& t) {
    for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v)))
            return false;
    return true;
}

// ---- explicit instantiations ----------------------------------------------

#define DEFOG_INSTANTIATE(T)                                                            \
    template void backward<T>(const Var<T>&);                                           \
    template Var<T> conv2d<T>(const Var<T>&, const Var<T>&, const Var<T>&, int, int);   \
    template Var<T> conv_transpose2d_x2<T>(const Var<T>&, const Var<T>&, const Var<T>&);\
    template Var<T> pixel_shuffle2<T>(const Var<T>&);                                   \
    template Var<T> bilinear_resize<T>(const Var<T>&, int, int);                        \
    template Var<T> instance_norm<T>(const Var<T>&, T);                                 \
    template Var<T> relu<T>(const Var<T>&);                                             \
    template Var<T> leaky_relu<T>(const Var<T>&, T);                                    \
    template Var<T> tanh_op<T>(const Var<T>&);                                          \
    template Var<T> sigmoid_op<T>(const Var<T>&);                                       \
    template Var<T> clamp_op<T>(const Var<T>&, T, T);                                   \
    template Var<T> add<T>(const Var<T>&, const Var<T>&);                               \
    template Var<T> sub<T>(const Var<T>&, const Var<T>&);                               \
    template Var<T> mul_map<T>(const Var<T>&, const TensorT<T>&);                       \
    template Var<T> concat_ch<T>(const Var<T>&, const Var<T>&);                         \
    template Var<T> slice_ch<T>(const Var<T>&, int, int);                               \
    template Var<T> pad_reflect<T>(const Var<T>&, int, int, int, int);                  \
    template Var<T> crop_spatial<T>(const Var<T>&, int, int, int, int);                 \
    template Var<T> global_avg_pool<T>(const Var<T>&);                                  \
    template Var<T> linear<T>(const Var<T>&, const Var<T>&, const Var<T>&);             \
    template Var<T> scale_channels<T>(const Var<T>&, const Var<T>&);                    \
    template Var<T> maxpool2<T>(const Var<T>&);                                         \
    template Var<T> mean_abs_diff<T>(const Var<T>&, const Var<T>&);                     \
    template Var<T> mean_abs_diff_weighted<T>(const Var<T>&, const Var<T>&,             \
                                              const TensorT<T>&);                       \
    template Var<T> mean_sq_diff<T>(const Var<T>&, const Var<T>&);                      \
    template Var<T> mean_sq_affine<T>(const Var<T>&, const TensorT<T>&, T);             \
    template Var<T> scalar_combine<T>(const std::vector<std::pair<Var<T>, T>>&);        \
    template T scalar_value<T>(const Var<T>&);                                          \
    template bool all_finite<T>(const TensorT<T>&);

DEFOG_INSTANTIATE(float)
DEFOG_INSTANTIATE(double)

#undef DEFOG_INSTANTIATE

} // namespace defog::ad
