#pragma once

#include <optional>
#include <string>
#include <vector>

#include "satfusion/autodiff.hpp"
#include "satfusion/tensor.hpp"

namespace satfusion {

// Full-reference quality metrics. Plain overloads return doubles for
// evaluation; the Value overloads build differentiable graph nodes for use
// as loss terms. Both run the same double-precision kernels.

double mae(const Tensor& a, const Tensor& b);
double mse(const Tensor& a, const Tensor& b);

/// 10*log10(peak^2 / mse); 100 dB when mse is exactly zero.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

/// Gaussian-window SSIM, mean over valid windows and channels. The default
/// 11x11 sigma-1.5 window shrinks to the largest odd size that fits when an
/// image is smaller than 11 pixels.
double ssim(const Tensor& a, const Tensor& b);
/// Fixed-window variant; throws ShapeError if the image is smaller than win.
double ssim(const Tensor& a, const Tensor& b, int win, double sigma);

/// Mean per-pixel spectral angle in degrees; zero-norm pixels contribute 0.
double sam_degrees(const Tensor& a, const Tensor& b);
double sam_radians(const Tensor& a, const Tensor& b);

/// Relative dimensionless global error: 100 * (1/gamma) *
/// sqrt(mean_k(RMSE_k^2 / mu_k^2)). Bands whose reference mean is below
/// 1e-6 in magnitude are skipped with a warning; all bands skipped is a
/// DegenerateError.
double ergas(const Tensor& sr, const Tensor& gt, int gamma);

// Differentiable variants (scalar outputs).
Value mae_loss(const Value& a, const Value& b);
Value mse_loss(const Value& a, const Value& b);
Value ssim_mean(const Value& a, const Value& b);
Value sam_mean_radians(const Value& a, const Value& b);

/// Window side used for an HxW image (<= 11, odd).
int ssim_window_for(int h, int w);

/// One row of metric values.
struct SceneMetrics {
    double psnr = 0, ssim = 0, sam_deg = 0, ergas = 0, mae = 0, mse = 0;
};

SceneMetrics compute_metrics(const Tensor& sr, const Tensor& gt, int gamma);

struct MetricRow {
    std::string scene_id;
    SceneMetrics sr;
    std::optional<SceneMetrics> baseline;
};

/// Per-scene rows plus an arithmetic-mean aggregate. SAM values are degrees
/// throughout (serialized with an explicit unit label).
struct MetricReport {
    std::vector<MetricRow> rows;
    SceneMetrics aggregate;
    std::optional<SceneMetrics> baseline_aggregate;

    /// Recomputes the aggregate rows from the per-scene rows.
    void finalize();
};

} // namespace satfusion
