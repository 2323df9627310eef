#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "satfusion/error.hpp"

namespace satfusion {

/// Dense H x W x C float32 image/feature carrier. Row-major, channels-last:
/// element (y, x, c) lives at index (y * width + x) * channels + c.
/// Images are normalized to [0, 1] unless a caller states otherwise.
class Tensor {
public:
    Tensor() = default;

    Tensor(int height, int width, int channels, float fill = 0.0f)
        : h_(height), w_(width), c_(channels),
          data_(std::size_t(check_dims(height, width, channels)), fill) {}

    Tensor(int height, int width, int channels, std::vector<float> data)
        : h_(height), w_(width), c_(channels), data_(std::move(data)) {
        if (data_.size() != std::size_t(check_dims(height, width, channels)))
            throw ShapeError("tensor data length does not match dimensions");
    }

    int height() const { return h_; }
    int width() const { return w_; }
    int channels() const { return c_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    bool same_shape(const Tensor& o) const {
        return h_ == o.h_ && w_ == o.w_ && c_ == o.c_;
    }

    float& at(int y, int x, int c) {
        return data_[std::size_t((y * w_ + x) * c_ + c)];
    }
    float at(int y, int x, int c) const {
        return data_[std::size_t((y * w_ + x) * c_ + c)];
    }

    float& operator[](std::size_t i) { return data_[i]; }
    float operator[](std::size_t i) const { return data_[i]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    const std::vector<float>& vec() const { return data_; }

    bool allfinite() const;

    /// Throws ShapeError unless this tensor matches (h, w, c).
    void require_shape(int h, int w, int c, const char* what) const;

private:
    static std::int64_t check_dims(int h, int w, int c) {
        if (h < 0 || w < 0 || c < 0)
            throw ShapeError("negative tensor dimension");
        return std::int64_t(h) * w * c;
    }

    int h_ = 0, w_ = 0, c_ = 0;
    std::vector<float> data_;
};

bool operator==(const Tensor& a, const Tensor& b);
inline bool operator!=(const Tensor& a, const Tensor& b) { return !(a == b); }

// ---------------------------------------------------------------------------
// Plain (non-differentiable) tensor kernels. The autodiff layer reuses these
// for forward passes; the data pipeline uses them directly.

/// Elementwise clamp to [0, 1].
Tensor clamp01(const Tensor& x);

/// Integer translation by (dy, dx); vacated pixels replicate the nearest
/// edge. translate(x, 1, 0) moves content down one row.
Tensor translate_replicate(const Tensor& x, int dy, int dx);

/// Separable Gaussian blur, kernel truncated at 3*sigma and normalized to
/// sum 1, replicate edges. sigma <= 0 returns the input unchanged.
Tensor gaussian_blur_replicate(const Tensor& x, double sigma);

/// Keep every gamma-th pixel starting at (0, 0).
Tensor decimate(const Tensor& x, int gamma);

/// Corner-aligned bilinear resize (forward only; the differentiable variant
/// lives in autodiff).
Tensor resize_bilinear_plain(const Tensor& x, int target_h, int target_w);

/// Center crop by `margin` pixels on every side.
Tensor center_crop(const Tensor& x, int margin);

/// Same-size 2-D separable convolution with a double-precision kernel
/// (zero padding). Used to apply windowed-sinc shift kernels.
Tensor separable_filter_same(const Tensor& x, const std::vector<double>& ky,
                             const std::vector<double>& kx);

} // namespace satfusion
