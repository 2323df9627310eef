#include "satfusion/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <utility>

namespace satfusion {

Value make_value(Tensor t, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return n;
}

Value make_op(const char* op, Tensor value, std::vector<Value> parents,
              std::function<void(Node&)> backprop) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->op = op;
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    n->parents = std::move(parents);
    if (rg) n->backprop = std::move(backprop);
    return n;
}

double scalar_of(const Value& v) {
    if (v->value.size() != 1) throw UsageError("scalar_of: node is not scalar");
    return double(v->value[0]);
}

Value scalar_value(double v) {
    Tensor t(1, 1, 1);
    t[0] = float(v);
    return make_value(std::move(t));
}

void backward(const Value& loss) {
    if (loss->value.height() != 1 || loss->value.width() != 1 || loss->value.channels() != 1)
        throw UsageError("backward: loss must be a scalar (1x1x1) node");
    if (!loss->requires_grad) return;

    // Iterative post-order DFS over the grad-requiring subgraph.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(loss.get(), 0);
    visited.insert(loss.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        bool descended = false;
        while (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
                descended = true;
                break;
            }
        }
        if (!descended && (stack.back().second >= stack.back().first->parents.size())) {
            order.push_back(stack.back().first);
            stack.pop_back();
        }
    }

    loss->ensure_grad()[0] += 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
    }
}

namespace {

void check_same_shape(const Value& a, const Value& b, const char* op) {
    if (!a->value.same_shape(b->value))
        throw ShapeError(std::string(op) + ": operand shapes differ");
}

} // namespace

// --- elementwise -------------------------------------------------------------

Value add(const Value& a, const Value& b) {
    check_same_shape(a, b, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
    return make_op("add", std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Node* p = n.parents[std::size_t(k)].get();
            if (!p->requires_grad) continue;
            Tensor& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

Value sub(const Value& a, const Value& b) {
    check_same_shape(a, b, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b->value[i];
    return make_op("sub", std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            Tensor& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

Value mul(const Value& a, const Value& b) {
    check_same_shape(a, b, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b->value[i];
    return make_op("mul", std::move(out), {a, b}, [](Node& n) {
        Node* pa = n.parents[0].get();
        Node* pb = n.parents[1].get();
        if (pa->requires_grad) {
            Tensor& g = pa->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pb->value[i];
        }
        if (pb->requires_grad) {
            Tensor& g = pb->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * pa->value[i];
        }
    });
}

Value scale(const Value& a, double s) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = float(out[i] * s);
    return make_op("scale", std::move(out), {a}, [s](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += float(n.grad[i] * s);
    });
}

Value add_scalar(const Value& a, double s) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = float(out[i] + s);
    return make_op("add_scalar", std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

Value relu(const Value& a) {
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0f, out[i]);
    return make_op("relu", std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (p->value[i] > 0.0f) g[i] += n.grad[i];
    });
}

// --- reductions ---------------------------------------------------------------

Value sum_all(const Value& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) acc += a->value[i];
    Tensor out(1, 1, 1);
    out[0] = float(acc);
    return make_op("sum_all", std::move(out), {a}, [](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        float up = n.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
    });
}

Value mean_all(const Value& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a->value.size(); ++i) acc += a->value[i];
    const double inv = 1.0 / double(a->value.size());
    Tensor out(1, 1, 1);
    out[0] = float(acc * inv);
    return make_op("mean_all", std::move(out), {a}, [inv](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        float up = float(n.grad[0] * inv);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += up;
    });
}

Value channel_mean(const Value& a) {
    const int h = a->value.height(), w = a->value.width(), c = a->value.channels();
    const double inv = 1.0 / (double(h) * w);
    Tensor out(1, 1, c);
    for (int ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) acc += a->value.at(y, x, ch);
        out.at(0, 0, ch) = float(acc * inv);
    }
    return make_op("channel_mean", std::move(out), {a}, [inv](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const int h = g.height(), w = g.width(), c = g.channels();
        for (int ch = 0; ch < c; ++ch) {
            float up = float(n.grad.at(0, 0, ch) * inv);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) g.at(y, x, ch) += up;
        }
    });
}

Value add_channel_bias(const Value& x, const Value& bias) {
    const int c = x->value.channels();
    bias->value.require_shape(1, 1, c, "add_channel_bias bias");
    Tensor out = x->value;
    const int h = out.height(), w = out.width();
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < c; ++ch) out.at(y, xx, ch) += bias->value.at(0, 0, ch);
    return make_op("add_channel_bias", std::move(out), {x, bias}, [](Node& n) {
        Node* px = n.parents[0].get();
        Node* pb = n.parents[1].get();
        const int h = n.grad.height(), w = n.grad.width(), c = n.grad.channels();
        if (px->requires_grad) {
            Tensor& g = px->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (pb->requires_grad) {
            Tensor& g = pb->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int y = 0; y < h; ++y)
                    for (int x = 0; x < w; ++x) acc += n.grad.at(y, x, ch);
                g.at(0, 0, ch) += float(acc);
            }
        }
    });
}

Value frame_average(const std::vector<Value>& frames) {
    if (frames.empty()) throw ShapeError("frame_average: empty frame list");
    for (const auto& f : frames) check_same_shape(frames[0], f, "frame_average");
    const std::size_t n = frames[0]->value.size();
    const std::size_t t = frames.size();
    Tensor out(frames[0]->value.height(), frames[0]->value.width(),
               frames[0]->value.channels());
    // Sort operands by value per element: the sum order becomes canonical,
    // making the result bitwise invariant under frame permutations.
    std::vector<float> vals(t);
    const double inv = 1.0 / double(t);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < t; ++k) vals[k] = frames[k]->value[i];
        std::sort(vals.begin(), vals.end());
        double acc = 0.0;
        for (float v : vals) acc += v;
        out[i] = float(acc * inv);
    }
    std::vector<Value> parents(frames.begin(), frames.end());
    return make_op("frame_average", std::move(out), std::move(parents), [inv](Node& n) {
        for (auto& pv : n.parents) {
            Node* p = pv.get();
            if (!p->requires_grad) continue;
            Tensor& g = p->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += float(n.grad[i] * inv);
        }
    });
}

// --- structural ----------------------------------------------------------------

Value concat_channels(const std::vector<Value>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: empty list");
    const int h = xs[0]->value.height(), w = xs[0]->value.width();
    int ctotal = 0;
    for (const auto& x : xs) {
        if (x->value.height() != h || x->value.width() != w)
            throw ShapeError("concat_channels: spatial dims differ");
        ctotal += x->value.channels();
    }
    Tensor out(h, w, ctotal);
    int off = 0;
    for (const auto& x : xs) {
        const int c = x->value.channels();
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int ch = 0; ch < c; ++ch) out.at(y, xx, off + ch) = x->value.at(y, xx, ch);
        off += c;
    }
    std::vector<Value> parents(xs.begin(), xs.end());
    return make_op("concat_channels", std::move(out), std::move(parents), [](Node& n) {
        const int h = n.grad.height(), w = n.grad.width();
        int off = 0;
        for (auto& pv : n.parents) {
            Node* p = pv.get();
            const int c = p->value.channels();
            if (p->requires_grad) {
                Tensor& g = p->ensure_grad();
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        for (int ch = 0; ch < c; ++ch) g.at(y, xx, ch) += n.grad.at(y, xx, off + ch);
            }
            off += c;
        }
    });
}

Value concat_rows(const std::vector<Value>& xs) {
    if (xs.empty()) throw ShapeError("concat_rows: empty list");
    const int w = xs[0]->value.width(), c = xs[0]->value.channels();
    int htotal = 0;
    for (const auto& x : xs) {
        if (x->value.width() != w || x->value.channels() != c)
            throw ShapeError("concat_rows: width/channel dims differ");
        htotal += x->value.height();
    }
    Tensor out(htotal, w, c);
    int off = 0;
    for (const auto& x : xs) {
        const int h = x->value.height();
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int ch = 0; ch < c; ++ch) out.at(off + y, xx, ch) = x->value.at(y, xx, ch);
        off += h;
    }
    std::vector<Value> parents(xs.begin(), xs.end());
    return make_op("concat_rows", std::move(out), std::move(parents), [](Node& n) {
        const int w = n.grad.width(), c = n.grad.channels();
        int off = 0;
        for (auto& pv : n.parents) {
            Node* p = pv.get();
            const int h = p->value.height();
            if (p->requires_grad) {
                Tensor& g = p->ensure_grad();
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        for (int ch = 0; ch < c; ++ch) g.at(y, xx, ch) += n.grad.at(off + y, xx, ch);
            }
            off += h;
        }
    });
}

Value crop(const Value& x, int y0, int x0, int h, int w) {
    const Tensor& v = x->value;
    if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > v.height() || x0 + w > v.width())
        throw ShapeError("crop: window outside tensor");
    Tensor out(h, w, v.channels());
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < v.channels(); ++ch) out.at(y, xx, ch) = v.at(y0 + y, x0 + xx, ch);
    return make_op("crop", std::move(out), {x}, [y0, x0](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor& g = p->ensure_grad();
        const int h = n.grad.height(), w = n.grad.width(), c = n.grad.channels();
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                for (int ch = 0; ch < c; ++ch) g.at(y0 + y, x0 + xx, ch) += n.grad.at(y, xx, ch);
    });
}

// --- conv2d ---------------------------------------------------------------------

namespace {

struct ConvDims {
    int cin, cout, kh, kw, stride, pad, hout, wout;
};

ConvDims conv_dims(const Tensor& x, const Tensor& k, const Tensor& b, int cout,
                   int stride, int padding) {
    if (stride < 1) throw ParamError("conv2d: stride must be >= 1");
    if (padding < 0) throw ParamError("conv2d: negative padding");
    ConvDims d;
    d.cin = x.channels();
    d.cout = cout;
    d.kh = k.height();
    d.kw = k.width();
    d.stride = stride;
    d.pad = padding;
    if (d.kh < 1 || d.kw < 1) throw ShapeError("conv2d: empty kernel");
    if (cout < 1 || k.channels() != d.cin * cout)
        throw ShapeError("conv2d: kernel channel dim must be Cin*Cout (channel mismatch)");
    b.require_shape(1, 1, cout, "conv2d bias");
    d.hout = (x.height() + 2 * padding - d.kh) / stride + 1;
    d.wout = (x.width() + 2 * padding - d.kw) / stride + 1;
    if (x.height() + 2 * padding - d.kh < 0 || x.width() + 2 * padding - d.kw < 0 ||
        d.hout < 1 || d.wout < 1)
        throw ShapeError("conv2d: non-positive output dimension");
    return d;
}

Tensor conv_forward(const Tensor& x, const Tensor& k, const Tensor& b, const ConvDims& d) {
    Tensor out(d.hout, d.wout, d.cout);
    std::vector<double> acc(std::size_t(d.cout));
    for (int y = 0; y < d.hout; ++y) {
        for (int xx = 0; xx < d.wout; ++xx) {
            for (int co = 0; co < d.cout; ++co) acc[std::size_t(co)] = b.at(0, 0, co);
            for (int ky = 0; ky < d.kh; ++ky) {
                const int yi = y * d.stride + ky - d.pad;
                if (yi < 0 || yi >= x.height()) continue;
                for (int kx = 0; kx < d.kw; ++kx) {
                    const int xi = xx * d.stride + kx - d.pad;
                    if (xi < 0 || xi >= x.width()) continue;
                    const float* xrow = x.data() + std::size_t((yi * x.width() + xi) * d.cin);
                    const float* wbase =
                        k.data() + std::size_t((ky * d.kw + kx) * d.cin * d.cout);
                    for (int ci = 0; ci < d.cin; ++ci) {
                        const double xv = xrow[ci];
                        const float* wrow = wbase + std::size_t(ci * d.cout);
                        for (int co = 0; co < d.cout; ++co)
                            acc[std::size_t(co)] += xv * wrow[co];
                    }
                }
            }
            for (int co = 0; co < d.cout; ++co) out.at(y, xx, co) = float(acc[std::size_t(co)]);
        }
    }
    return out;
}

} // namespace

Value conv2d(const Value& x, const Value& kernel, const Value& bias, int cout,
             int stride, int padding) {
    const ConvDims d = conv_dims(x->value, kernel->value, bias->value, cout, stride, padding);
    Tensor out = conv_forward(x->value, kernel->value, bias->value, d);
    return make_op("conv2d", std::move(out), {x, kernel, bias}, [d](Node& n) {
        Node* px = n.parents[0].get();
        Node* pk = n.parents[1].get();
        Node* pb = n.parents[2].get();
        const Tensor& xv = px->value;
        const Tensor& kv = pk->value;
        // Double buffers keep long accumulations exact enough for the
        // finite-difference suite.
        std::vector<double> dgx, dgw, dgb;
        if (px->requires_grad) dgx.assign(xv.size(), 0.0);
        if (pk->requires_grad) dgw.assign(kv.size(), 0.0);
        if (pb->requires_grad) dgb.assign(std::size_t(d.cout), 0.0);
        for (int y = 0; y < d.hout; ++y) {
            for (int xx = 0; xx < d.wout; ++xx) {
                const float* go = &n.grad.at(y, xx, 0);
                if (pb->requires_grad)
                    for (int co = 0; co < d.cout; ++co) dgb[std::size_t(co)] += go[co];
                for (int ky = 0; ky < d.kh; ++ky) {
                    const int yi = y * d.stride + ky - d.pad;
                    if (yi < 0 || yi >= xv.height()) continue;
                    for (int kx = 0; kx < d.kw; ++kx) {
                        const int xi = xx * d.stride + kx - d.pad;
                        if (xi < 0 || xi >= xv.width()) continue;
                        const std::size_t xbase = std::size_t((yi * xv.width() + xi) * d.cin);
                        const std::size_t wbase =
                            std::size_t(((ky * d.kw + kx) * d.cin) * d.cout);
                        for (int ci = 0; ci < d.cin; ++ci) {
                            const float* wrow = kv.data() + wbase + std::size_t(ci * d.cout);
                            if (px->requires_grad) {
                                double acc = 0.0;
                                for (int co = 0; co < d.cout; ++co) acc += double(go[co]) * wrow[co];
                                dgx[xbase + std::size_t(ci)] += acc;
                            }
                            if (pk->requires_grad) {
                                const double xvv = xv[xbase + std::size_t(ci)];
                                double* dwr = dgw.data() + wbase + std::size_t(ci * d.cout);
                                for (int co = 0; co < d.cout; ++co) dwr[co] += xvv * go[co];
                            }
                        }
                    }
                }
            }
        }
        if (px->requires_grad) {
            Tensor& g = px->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += float(dgx[i]);
        }
        if (pk->requires_grad) {
            Tensor& g = pk->ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += float(dgw[i]);
        }
        if (pb->requires_grad) {
            Tensor& g = pb->ensure_grad();
            for (int co = 0; co < d.cout; ++co) g.at(0, 0, co) += float(dgb[std::size_t(co)]);
        }
    });
}

// --- prelu ------------------------------------------------------------------------

Value prelu(const Value& x, const Value& slope) {
    const int c = x->value.channels();
    if (slope->value.size() != std::size_t(c))
        throw ShapeError("prelu: slope length must equal channel count");
    Tensor out = x->value;
    const int h = out.height(), w = out.width();
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < c; ++ch) {
                float v = out.at(y, xx, ch);
                if (v < 0.0f) out.at(y, xx, ch) = slope->value[std::size_t(ch)] * v;
            }
    return make_op("prelu", std::move(out), {x, slope}, [](Node& n) {
        Node* px = n.parents[0].get();
        Node* ps = n.parents[1].get();
        const Tensor& xv = px->value;
        const int h = xv.height(), w = xv.width(), c = xv.channels();
        if (px->requires_grad) {
            Tensor& g = px->ensure_grad();
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx)
                    for (int ch = 0; ch < c; ++ch) {
                        float v = xv.at(y, xx, ch);
                        float f = v > 0.0f ? 1.0f : ps->value[std::size_t(ch)];
                        g.at(y, xx, ch) += n.grad.at(y, xx, ch) * f;
                    }
        }
        if (ps->requires_grad) {
            Tensor& g = ps->ensure_grad();
            for (int ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        float v = xv.at(y, xx, ch);
                        if (v < 0.0f) acc += double(n.grad.at(y, xx, ch)) * v;
                    }
                g[std::size_t(ch)] += float(acc);
            }
        }
    });
}

// --- batch norm ---------------------------------------------------------------------

Value batch_norm_train(const Value& x, const Value& scale, const Value& shift,
                       double eps, BatchStats* stats) {
    if (eps <= 0.0) throw ParamError("batch_norm: eps must be > 0");
    const int h = x->value.height(), w = x->value.width(), c = x->value.channels();
    scale->value.require_shape(1, 1, c, "batch_norm scale");
    shift->value.require_shape(1, 1, c, "batch_norm shift");
    const double inv_n = 1.0 / (double(h) * w);

    auto mean = std::make_shared<std::vector<double>>(std::size_t(c), 0.0);
    auto var = std::make_shared<std::vector<double>>(std::size_t(c), 0.0);
    for (int ch = 0; ch < c; ++ch) {
        double m = 0.0;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) m += x->value.at(y, xx, ch);
        m *= inv_n;
        double v = 0.0;
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx) {
                double d = x->value.at(y, xx, ch) - m;
                v += d * d;
            }
        (*mean)[std::size_t(ch)] = m;
        (*var)[std::size_t(ch)] = v * inv_n;
    }
    if (stats) {
        stats->mean = *mean;
        stats->var = *var;
    }

    Tensor out(h, w, c);
    for (int ch = 0; ch < c; ++ch) {
        const double inv_std = 1.0 / std::sqrt((*var)[std::size_t(ch)] + eps);
        const double g = scale->value.at(0, 0, ch), b = shift->value.at(0, 0, ch);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                out.at(y, xx, ch) =
                    float(g * ((x->value.at(y, xx, ch) - (*mean)[std::size_t(ch)]) * inv_std) + b);
    }
    return make_op("batch_norm_train", std::move(out), {x, scale, shift},
                   [mean, var, eps, inv_n](Node& n) {
        Node* px = n.parents[0].get();
        Node* pscale = n.parents[1].get();
        Node* pshift = n.parents[2].get();
        const Tensor& xv = px->value;
        const int h = xv.height(), w = xv.width(), c = xv.channels();
        for (int ch = 0; ch < c; ++ch) {
            const double m = (*mean)[std::size_t(ch)];
            const double inv_std = 1.0 / std::sqrt((*var)[std::size_t(ch)] + eps);
            const double g = pscale->value.at(0, 0, ch);
            // Per-channel sums of dy and dy*xhat.
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const double dy = n.grad.at(y, xx, ch);
                    const double xhat = (xv.at(y, xx, ch) - m) * inv_std;
                    sum_dy += dy;
                    sum_dy_xhat += dy * xhat;
                }
            if (pshift->requires_grad) pshift->ensure_grad().at(0, 0, ch) += float(sum_dy);
            if (pscale->requires_grad) pscale->ensure_grad().at(0, 0, ch) += float(sum_dy_xhat);
            if (px->requires_grad) {
                Tensor& gx = px->ensure_grad();
                const double mean_dy = sum_dy * inv_n;
                const double mean_dy_xhat = sum_dy_xhat * inv_n;
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx) {
                        const double dy = n.grad.at(y, xx, ch);
                        const double xhat = (xv.at(y, xx, ch) - m) * inv_std;
                        gx.at(y, xx, ch) +=
                            float(g * inv_std * (dy - mean_dy - xhat * mean_dy_xhat));
                    }
            }
        }
    });
}

Value batch_norm_infer(const Value& x, const Value& scale, const Value& shift,
                       const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eps) {
    if (eps <= 0.0) throw ParamError("batch_norm: eps must be > 0");
    const int h = x->value.height(), w = x->value.width(), c = x->value.channels();
    scale->value.require_shape(1, 1, c, "batch_norm scale");
    shift->value.require_shape(1, 1, c, "batch_norm shift");
    if (running_mean.size() != std::size_t(c) || running_var.size() != std::size_t(c))
        throw ShapeError("batch_norm_infer: running stats length mismatch");
    Tensor out(h, w, c);
    auto inv_std = std::make_shared<std::vector<double>>(std::size_t(c));
    auto rm = std::make_shared<std::vector<double>>(running_mean);
    for (int ch = 0; ch < c; ++ch)
        (*inv_std)[std::size_t(ch)] = 1.0 / std::sqrt(running_var[std::size_t(ch)] + eps);
    for (int ch = 0; ch < c; ++ch) {
        const double g = scale->value.at(0, 0, ch), b = shift->value.at(0, 0, ch);
        for (int y = 0; y < h; ++y)
            for (int xx = 0; xx < w; ++xx)
                out.at(y, xx, ch) = float(
                    g * ((x->value.at(y, xx, ch) - (*rm)[std::size_t(ch)]) * (*inv_std)[std::size_t(ch)]) + b);
    }
    return make_op("batch_norm_infer", std::move(out), {x, scale, shift},
                   [inv_std, rm](Node& n) {
        Node* px = n.parents[0].get();
        Node* pscale = n.parents[1].get();
        Node* pshift = n.parents[2].get();
        const Tensor& xv = px->value;
        const int h = xv.height(), w = xv.width(), c = xv.channels();
        for (int ch = 0; ch < c; ++ch) {
            const double s = (*inv_std)[std::size_t(ch)];
            const double g = pscale->value.at(0, 0, ch);
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int y = 0; y < h; ++y)
                for (int xx = 0; xx < w; ++xx) {
                    const double dy = n.grad.at(y, xx, ch);
                    sum_dy += dy;
                    sum_dy_xhat += dy * (xv.at(y, xx, ch) - (*rm)[std::size_t(ch)]) * s;
                }
            if (pshift->requires_grad) pshift->ensure_grad().at(0, 0, ch) += float(sum_dy);
            if (pscale->requires_grad) pscale->ensure_grad().at(0, 0, ch) += float(sum_dy_xhat);
            if (px->requires_grad) {
                Tensor& gx = px->ensure_grad();
                for (int y = 0; y < h; ++y)
                    for (int xx = 0; xx < w; ++xx)
                        gx.at(y, xx, ch) += float(double(n.grad.at(y, xx, ch)) * g * s);
            }
        }
    });
}

// --- pixel shuffle -------------------------------------------------------------------

Tensor pixel_shuffle_plain(const Tensor& x, int r) {
    if (r < 1) throw ParamError("pixel_shuffle: r must be >= 1");
    if (x.channels() % (r * r) != 0)
        throw ShapeError("pixel_shuffle: channels not divisible by r^2");
    const int h = x.height(), w = x.width(), cout = x.channels() / (r * r);
    Tensor out(h * r, w * r, cout);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int c = 0; c < cout; ++c)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j)
                        out.at(y * r + i, xx * r + j, c) = x.at(y, xx, c * r * r + i * r + j);
    return out;
}

Tensor pixel_unshuffle_plain(const Tensor& x, int r) {
    if (r < 1) throw ParamError("pixel_unshuffle: r must be >= 1");
    if (x.height() % r != 0 || x.width() % r != 0)
        throw ShapeError("pixel_unshuffle: spatial dims not divisible by r");
    const int h = x.height() / r, w = x.width() / r, cin = x.channels();
    Tensor out(h, w, cin * r * r);
    for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx)
            for (int c = 0; c < cin; ++c)
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < r; ++j)
                        out.at(y, xx, c * r * r + i * r + j) = x.at(y * r + i, xx * r + j, c);
    return out;
}

Value pixel_shuffle(const Value& x, int r) {
    Tensor out = pixel_shuffle_plain(x->value, r);
    return make_op("pixel_shuffle", std::move(out), {x}, [r](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor scattered = pixel_unshuffle_plain(n.grad, r);
        Tensor& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += scattered[i];
    });
}

Value pixel_unshuffle(const Value& x, int r) {
    Tensor out = pixel_unshuffle_plain(x->value, r);
    return make_op("pixel_unshuffle", std::move(out), {x}, [r](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        Tensor scattered = pixel_shuffle_plain(n.grad, r);
        Tensor& g = p->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += scattered[i];
    });
}

// --- resize ------------------------------------------------------------------------

Value resize_bilinear(const Value& x, int target_h, int target_w) {
    Tensor out = resize_bilinear_plain(x->value, target_h, target_w);
    const int th = target_h, tw = target_w;
    return make_op("resize_bilinear", std::move(out), {x}, [th, tw](Node& n) {
        Node* p = n.parents[0].get();
        if (!p->requires_grad) return;
        const int h = p->value.height(), w = p->value.width(), c = p->value.channels();
        Tensor& g = p->ensure_grad();
        if (h == th && w == tw) {
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
            return;
        }
        const double sy_scale = th > 1 ? double(h - 1) / (th - 1) : 0.0;
        const double sx_scale = tw > 1 ? double(w - 1) / (tw - 1) : 0.0;
        for (int y = 0; y < th; ++y) {
            double sy = y * sy_scale;
            int y0 = std::min(int(sy), h - 1);
            int y1 = std::min(y0 + 1, h - 1);
            double fy = sy - y0;
            for (int xx = 0; xx < tw; ++xx) {
                double sx = xx * sx_scale;
                int x0 = std::min(int(sx), w - 1);
                int x1 = std::min(x0 + 1, w - 1);
                double fx = sx - x0;
                for (int ch = 0; ch < c; ++ch) {
                    const float up = n.grad.at(y, xx, ch);
                    g.at(y0, x0, ch) += float((1 - fy) * (1 - fx) * up);
                    g.at(y0, x1, ch) += float((1 - fy) * fx * up);
                    g.at(y1, x0, ch) += float(fy * (1 - fx) * up);
                    g.at(y1, x1, ch) += float(fy * fx * up);
                }
            }
        }
    });
}

} // namespace satfusion
