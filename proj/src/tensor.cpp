#include "satfusion/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace satfusion {

bool Tensor::allfinite() const {
    for (float v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

void Tensor::require_shape(int h, int w, int c, const char* what) const {
    if (h_ != h || w_ != w || c_ != c)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(h) + "x" +
                         std::to_string(w) + "x" + std::to_string(c) + ", got " +
                         std::to_string(h_) + "x" + std::to_string(w_) + "x" +
                         std::to_string(c_));
}

bool operator==(const Tensor& a, const Tensor& b) {
    return a.same_shape(b) && a.vec() == b.vec();
}

Tensor clamp01(const Tensor& x) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::min(1.0f, std::max(0.0f, out[i]));
    return out;
}

Tensor translate_replicate(const Tensor& x, int dy, int dx) {
    const int h = x.height(), w = x.width(), c = x.channels();
    Tensor out(h, w, c);
    for (int y = 0; y < h; ++y) {
        int sy = std::clamp(y - dy, 0, h - 1);
        for (int xx = 0; xx < w; ++xx) {
            int sx = std::clamp(xx - dx, 0, w - 1);
            for (int ch = 0; ch < c; ++ch) out.at(y, xx, ch) = x.at(sy, sx, ch);
        }
    }
    return out;
}

namespace {

std::vector<double> gaussian_taps(double sigma) {
    int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> k(std::size_t(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        double v = std::exp(-0.5 * (double(i) * i) / (sigma * sigma));
        k[std::size_t(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

// 1-D pass along rows (axis=0) or columns (axis=1), replicate edges.
Tensor filter_axis_replicate(const Tensor& x, const std::vector<double>& k, int axis) {
    const int h = x.height(), w = x.width(), c = x.channels();
    const int radius = int(k.size() / 2);
    Tensor out(h, w, c);
    for (int y = 0; y < h; ++y) {
        for (int xx = 0; xx < w; ++xx) {
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int t = -radius; t <= radius; ++t) {
                    int sy = y, sx = xx;
                    if (axis == 0)
                        sy = std::clamp(y + t, 0, h - 1);
                    else
                        sx = std::clamp(xx + t, 0, w - 1);
                    acc += k[std::size_t(t + radius)] * x.at(sy, sx, ch);
                }
                out.at(y, xx, ch) = float(acc);
            }
        }
    }
    return out;
}

} // namespace

Tensor gaussian_blur_replicate(const Tensor& x, double sigma) {
    if (sigma <= 0.0) return x;
    auto k = gaussian_taps(sigma);
    return filter_axis_replicate(filter_axis_replicate(x, k, 0), k, 1);
}

Tensor decimate(const Tensor& x, int gamma) {
    if (gamma < 1) throw ParamError("decimate: gamma must be >= 1");
    if (x.height() % gamma != 0 || x.width() % gamma != 0)
        throw ShapeError("decimate: dimensions not divisible by gamma");
    Tensor out(x.height() / gamma, x.width() / gamma, x.channels());
    for (int y = 0; y < out.height(); ++y)
        for (int xx = 0; xx < out.width(); ++xx)
            for (int ch = 0; ch < x.channels(); ++ch)
                out.at(y, xx, ch) = x.at(y * gamma, xx * gamma, ch);
    return out;
}

Tensor resize_bilinear_plain(const Tensor& x, int target_h, int target_w) {
    if (target_h < 1 || target_w < 1)
        throw ShapeError("resize: target dimensions must be >= 1");
    const int h = x.height(), w = x.width(), c = x.channels();
    if (h == target_h && w == target_w) return x;
    Tensor out(target_h, target_w, c);
    const double sy_scale = target_h > 1 ? double(h - 1) / (target_h - 1) : 0.0;
    const double sx_scale = target_w > 1 ? double(w - 1) / (target_w - 1) : 0.0;
    for (int y = 0; y < target_h; ++y) {
        double sy = y * sy_scale;
        int y0 = std::min(int(sy), h - 1);
        int y1 = std::min(y0 + 1, h - 1);
        double fy = sy - y0;
        for (int xx = 0; xx < target_w; ++xx) {
            double sx = xx * sx_scale;
            int x0 = std::min(int(sx), w - 1);
            int x1 = std::min(x0 + 1, w - 1);
            double fx = sx - x0;
            for (int ch = 0; ch < c; ++ch) {
                double v = (1 - fy) * ((1 - fx) * x.at(y0, x0, ch) + fx * x.at(y0, x1, ch)) +
                           fy * ((1 - fx) * x.at(y1, x0, ch) + fx * x.at(y1, x1, ch));
                out.at(y, xx, ch) = float(v);
            }
        }
    }
    return out;
}

Tensor center_crop(const Tensor& x, int margin) {
    if (margin < 0) throw ParamError("center_crop: negative margin");
    const int h = x.height() - 2 * margin, w = x.width() - 2 * margin;
    if (h < 1 || w < 1) throw ShapeError("center_crop: margin larger than image");
    Tensor out(h, w, x.channels());
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < x.channels(); ++ch)
                out.at(y, xx, ch) = x.at(y + margin, xx + margin, ch);
    return out;
}

Tensor separable_filter_same(const Tensor& x, const std::vector<double>& ky,
                             const std::vector<double>& kx) {
    if (ky.size() % 2 == 0 || kx.size() % 2 == 0)
        throw ParamError("separable_filter_same: kernel length must be odd");
    const int h = x.height(), w = x.width(), c = x.channels();
    const int ry = int(ky.size() / 2), rx = int(kx.size() / 2);
    Tensor tmp(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int t = -rx; t <= rx; ++t) {
                    int sx = xx + t;
                    if (sx < 0 || sx >= w) continue; // zero pad
                    acc += kx[std::size_t(t + rx)] * x.at(y, sx, ch);
                }
                tmp.at(y, xx, ch) = float(acc);
            }
    Tensor out(h, w, c);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int t = -ry; t <= ry; ++t) {
                    int sy = y + t;
                    if (sy < 0 || sy >= h) continue;
                    acc += ky[std::size_t(t + ry)] * tmp.at(sy, xx, ch);
                }
                out.at(y, xx, ch) = float(acc);
            }
    return out;
}

} // namespace satfusion
