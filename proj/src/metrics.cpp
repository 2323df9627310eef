#include "satfusion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace satfusion {

namespace {

constexpr double kC1 = 0.01 * 0.01; // (K1 * peak)^2
constexpr double kC2 = 0.03 * 0.03; // (K2 * peak)^2
constexpr double kSsimSigma = 1.5;

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) throw ShapeError(std::string(op) + ": shapes differ");
}

std::vector<double> gaussian_window(int win, double sigma) {
    std::vector<double> w(std::size_t(win), 0.0);
    const double half = (win - 1) / 2.0;
    double sum = 0.0;
    for (int i = 0; i < win; ++i) {
        double d = i - half;
        w[std::size_t(i)] = std::exp(-0.5 * d * d / (sigma * sigma));
        sum += w[std::size_t(i)];
    }
    for (double& v : w) v /= sum;
    return w;
}

struct WindowMoments {
    double mu_a, mu_b, var_a, var_b, cov;
};

WindowMoments window_moments(const Tensor& a, const Tensor& b, int y0, int x0, int ch,
                             const std::vector<double>& w1d) {
    const int win = int(w1d.size());
    double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
    for (int i = 0; i < win; ++i)
        for (int j = 0; j < win; ++j) {
            const double wt = w1d[std::size_t(i)] * w1d[std::size_t(j)];
            const double av = a.at(y0 + i, x0 + j, ch);
            const double bv = b.at(y0 + i, x0 + j, ch);
            mu_a += wt * av;
            mu_b += wt * bv;
            saa += wt * av * av;
            sbb += wt * bv * bv;
            sab += wt * av * bv;
        }
    return {mu_a, mu_b, saa - mu_a * mu_a, sbb - mu_b * mu_b, sab - mu_a * mu_b};
}

double ssim_forward(const Tensor& a, const Tensor& b, int win, double sigma) {
    const auto w1d = gaussian_window(win, sigma);
    const int ny = a.height() - win + 1, nx = a.width() - win + 1, c = a.channels();
    double acc = 0.0;
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) {
                const auto m = window_moments(a, b, y, x, ch, w1d);
                const double a1 = 2.0 * m.mu_a * m.mu_b + kC1;
                const double a2 = 2.0 * m.cov + kC2;
                const double b1 = m.mu_a * m.mu_a + m.mu_b * m.mu_b + kC1;
                const double b2 = m.var_a + m.var_b + kC2;
                acc += (a1 * a2) / (b1 * b2);
            }
    return acc / (double(ny) * nx * c);
}

struct SamSums {
    double total_radians = 0.0;
};

double sam_forward_radians(const Tensor& a, const Tensor& b) {
    const int h = a.height(), w = a.width(), c = a.channels();
    double acc = 0.0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double dot = 0, na2 = 0, nb2 = 0;
            for (int ch = 0; ch < c; ++ch) {
                const double av = a.at(y, x, ch), bv = b.at(y, x, ch);
                dot += av * bv;
                na2 += av * av;
                nb2 += bv * bv;
            }
            if (na2 == 0.0 || nb2 == 0.0) continue; // zero-vector pixels: angle 0
            double u = dot / std::sqrt(na2 * nb2);
            u = std::clamp(u, -1.0, 1.0);
            acc += std::acos(u);
        }
    return acc / (double(h) * w);
}

} // namespace

int ssim_window_for(int h, int w) {
    int win = std::min({11, h, w});
    if (win % 2 == 0) --win;
    if (win < 1) throw ShapeError("ssim: image smaller than the minimal window");
    return win;
}

double mae(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mae");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(double(a[i]) - b[i]);
    return acc / double(a.size());
}

double mse(const Tensor& a, const Tensor& b) {
    require_same(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = double(a[i]) - b[i];
        acc += d * d;
    }
    return acc / double(a.size());
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
    const double e = mse(a, b);
    if (e == 0.0) return 100.0;
    return 10.0 * std::log10(peak * peak / e);
}

double ssim(const Tensor& a, const Tensor& b) {
    require_same(a, b, "ssim");
    return ssim_forward(a, b, ssim_window_for(a.height(), a.width()), kSsimSigma);
}

double ssim(const Tensor& a, const Tensor& b, int win, double sigma) {
    require_same(a, b, "ssim");
    if (win < 1 || win % 2 == 0) throw ParamError("ssim: window must be odd and positive");
    if (a.height() < win || a.width() < win)
        throw ShapeError("ssim: image smaller than window");
    return ssim_forward(a, b, win, sigma);
}

double sam_radians(const Tensor& a, const Tensor& b) {
    require_same(a, b, "sam");
    return sam_forward_radians(a, b);
}

double sam_degrees(const Tensor& a, const Tensor& b) {
    return sam_radians(a, b) * (180.0 / M_PI);
}

double ergas(const Tensor& sr, const Tensor& gt, int gamma) {
    require_same(sr, gt, "ergas");
    if (gamma < 1) throw ParamError("ergas: gamma must be >= 1");
    const int h = sr.height(), w = sr.width(), c = sr.channels();
    const double n = double(h) * w;
    double acc = 0.0;
    int used = 0;
    for (int ch = 0; ch < c; ++ch) {
        double mu = 0.0, se = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                mu += gt.at(y, x, ch);
                const double d = double(sr.at(y, x, ch)) - gt.at(y, x, ch);
                se += d * d;
            }
        mu /= n;
        if (std::abs(mu) < 1e-6) {
            std::cerr << "ergas: skipping band " << ch << " with near-zero reference mean\n";
            continue;
        }
        acc += (se / n) / (mu * mu);
        ++used;
    }
    if (used == 0) throw DegenerateError("ergas: all bands have near-zero reference mean");
    return 100.0 / double(gamma) * std::sqrt(acc / double(used));
}

// --- differentiable variants ---------------------------------------------------

Value mae_loss(const Value& a, const Value& b) {
    require_same(a->value, b->value, "mae");
    const std::size_t n = a->value.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += std::abs(double(a->value[i]) - b->value[i]);
    Tensor out(1, 1, 1);
    out[0] = float(acc / double(n));
    return make_op("mae_loss", std::move(out), {a, b}, [](Node& nd) {
        Node* pa = nd.parents[0].get();
        Node* pb = nd.parents[1].get();
        const std::size_t n = pa->value.size();
        const double up = nd.grad[0] / double(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = double(pa->value[i]) - pb->value[i];
            const double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
            if (pa->requires_grad) pa->ensure_grad()[i] += float(up * s);
            if (pb->requires_grad) pb->ensure_grad()[i] -= float(up * s);
        }
    });
}

Value mse_loss(const Value& a, const Value& b) {
    require_same(a->value, b->value, "mse");
    const std::size_t n = a->value.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = double(a->value[i]) - b->value[i];
        acc += d * d;
    }
    Tensor out(1, 1, 1);
    out[0] = float(acc / double(n));
    return make_op("mse_loss", std::move(out), {a, b}, [](Node& nd) {
        Node* pa = nd.parents[0].get();
        Node* pb = nd.parents[1].get();
        const std::size_t n = pa->value.size();
        const double up = 2.0 * nd.grad[0] / double(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double d = double(pa->value[i]) - pb->value[i];
            if (pa->requires_grad) pa->ensure_grad()[i] += float(up * d);
            if (pb->requires_grad) pb->ensure_grad()[i] -= float(up * d);
        }
    });
}

Value ssim_mean(const Value& a, const Value& b) {
    require_same(a->value, b->value, "ssim");
    const int win = ssim_window_for(a->value.height(), a->value.width());
    Tensor out(1, 1, 1);
    out[0] = float(ssim_forward(a->value, b->value, win, kSsimSigma));
    return make_op("ssim_mean", std::move(out), {a, b}, [win](Node& nd) {
        Node* pa = nd.parents[0].get();
        Node* pb = nd.parents[1].get();
        const Tensor& av = pa->value;
        const Tensor& bv = pb->value;
        const auto w1d = gaussian_window(win, kSsimSigma);
        const int ny = av.height() - win + 1, nx = av.width() - win + 1, c = av.channels();
        const double up = nd.grad[0] / (double(ny) * nx * c);
        std::vector<double> ga, gb;
        if (pa->requires_grad) ga.assign(av.size(), 0.0);
        if (pb->requires_grad) gb.assign(av.size(), 0.0);
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x) {
                    const auto m = window_moments(av, bv, y, x, ch, w1d);
                    const double a1 = 2.0 * m.mu_a * m.mu_b + kC1;
                    const double a2 = 2.0 * m.cov + kC2;
                    const double b1 = m.mu_a * m.mu_a + m.mu_b * m.mu_b + kC1;
                    const double b2 = m.var_a + m.var_b + kC2;
                    const double s = (a1 * a2) / (b1 * b2);
                    const double inv_bb = 1.0 / (b1 * b2);
                    for (int i = 0; i < win; ++i)
                        for (int j = 0; j < win; ++j) {
                            const double wt = w1d[std::size_t(i)] * w1d[std::size_t(j)];
                            const std::size_t idx = std::size_t(
                                ((y + i) * av.width() + (x + j)) * c + ch);
                            const double ap = av[idx], bp = bv[idx];
                            if (pa->requires_grad) {
                                const double ds =
                                    wt * ((2.0 * m.mu_b * a2 + 2.0 * a1 * (bp - m.mu_b)) * inv_bb -
                                          s * (2.0 * m.mu_a / b1 + 2.0 * (ap - m.mu_a) / b2));
                                ga[idx] += up * ds;
                            }
                            if (pb->requires_grad) {
                                const double ds =
                                    wt * ((2.0 * m.mu_a * a2 + 2.0 * a1 * (ap - m.mu_a)) * inv_bb -
                                          s * (2.0 * m.mu_b / b1 + 2.0 * (bp - m.mu_b) / b2));
                                gb[idx] += up * ds;
                            }
                        }
                }
        if (pa->requires_grad) {
            Tensor& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += float(ga[i]);
        }
        if (pb->requires_grad) {
            Tensor& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += float(gb[i]);
        }
    });
}

Value sam_mean_radians(const Value& a, const Value& b) {
    require_same(a->value, b->value, "sam");
    Tensor out(1, 1, 1);
    out[0] = float(sam_forward_radians(a->value, b->value));
    return make_op("sam_mean", std::move(out), {a, b}, [](Node& nd) {
        Node* pa = nd.parents[0].get();
        Node* pb = nd.parents[1].get();
        const Tensor& av = pa->value;
        const Tensor& bv = pb->value;
        const int h = av.height(), w = av.width(), c = av.channels();
        const double up = nd.grad[0] / (double(h) * w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double dot = 0, na2 = 0, nb2 = 0;
                for (int ch = 0; ch < c; ++ch) {
                    const double avv = av.at(y, x, ch), bvv = bv.at(y, x, ch);
                    dot += avv * bvv;
                    na2 += avv * avv;
                    nb2 += bvv * bvv;
                }
                if (na2 == 0.0 || nb2 == 0.0) continue;
                const double na = std::sqrt(na2), nb = std::sqrt(nb2);
                double u = dot / (na * nb);
                u = std::clamp(u, -1.0, 1.0);
                // d(acos)/du clipped near |u| = 1 to keep gradients finite.
                const double denom = std::sqrt(std::max(1.0 - u * u, 1e-12));
                const double dacos = -1.0 / denom;
                for (int ch = 0; ch < c; ++ch) {
                    const double avv = av.at(y, x, ch), bvv = bv.at(y, x, ch);
                    if (pa->requires_grad) {
                        const double du = bvv / (na * nb) - u * avv / na2;
                        pa->ensure_grad().at(y, x, ch) += float(up * dacos * du);
                    }
                    if (pb->requires_grad) {
                        const double du = avv / (na * nb) - u * bvv / nb2;
                        pb->ensure_grad().at(y, x, ch) += float(up * dacos * du);
                    }
                }
            }
    });
}

SceneMetrics compute_metrics(const Tensor& sr, const Tensor& gt, int gamma) {
    SceneMetrics m;
    m.psnr = psnr(sr, gt);
    m.ssim = ssim(sr, gt);
    m.sam_deg = sam_degrees(sr, gt);
    m.ergas = ergas(sr, gt, gamma);
    m.mae = mae(sr, gt);
    m.mse = mse(sr, gt);
    return m;
}

namespace {

SceneMetrics mean_of(const std::vector<SceneMetrics>& v) {
    SceneMetrics out;
    if (v.empty()) return out;
    for (const auto& m : v) {
        out.psnr += m.psnr;
        out.ssim += m.ssim;
        out.sam_deg += m.sam_deg;
        out.ergas += m.ergas;
        out.mae += m.mae;
        out.mse += m.mse;
    }
    const double n = double(v.size());
    out.psnr /= n;
    out.ssim /= n;
    out.sam_deg /= n;
    out.ergas /= n;
    out.mae /= n;
    out.mse /= n;
    return out;
}

} // namespace

void MetricReport::finalize() {
    std::vector<SceneMetrics> srm, basem;
    for (const auto& r : rows) {
        srm.push_back(r.sr);
        if (r.baseline) basem.push_back(*r.baseline);
    }
    aggregate = mean_of(srm);
    if (!basem.empty() && basem.size() == rows.size())
        baseline_aggregate = mean_of(basem);
    else
        baseline_aggregate.reset();
}

} // namespace satfusion
