#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "satfusion/tensor.hpp"

namespace satfusion {

struct Node;
using Value = std::shared_ptr<Node>;

/// One vertex of the reverse-mode differentiation graph. Nodes are created
/// by the op constructors below and form an acyclic DAG through `parents`.
struct Node {
    Tensor value;
    Tensor grad;            ///< same shape as value; allocated on first use
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<Value> parents;
    /// Reads this->grad and accumulates into the parents' grads.
    std::function<void(Node&)> backprop;

    Tensor& ensure_grad() {
        if (grad.empty())
            grad = Tensor(value.height(), value.width(), value.channels());
        return grad;
    }
};

/// Wraps a tensor as a graph leaf.
Value make_value(Tensor t, bool requires_grad = false);
inline Value constant(Tensor t) { return make_value(std::move(t), false); }

/// Generic fused-op constructor; used by modules that define their own
/// differentiable kernels (losses, metrics).
Value make_op(const char* op, Tensor value, std::vector<Value> parents,
              std::function<void(Node&)> backprop);

/// Reverse-mode sweep from a scalar loss. Grad of each reachable node gets
/// d(loss)/d(node) added to it; repeated calls without fresh nodes
/// accumulate. Throws UsageError if `loss` is not 1x1x1.
void backward(const Value& loss);

/// Convenience for 1x1x1 nodes.
double scalar_of(const Value& v);
Value scalar_value(double v);

// --- elementwise -----------------------------------------------------------
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value scale(const Value& a, double s);
Value add_scalar(const Value& a, double s);
Value relu(const Value& a);

// --- reductions (double accumulation) --------------------------------------
Value sum_all(const Value& a);
Value mean_all(const Value& a);

/// Per-channel spatial mean -> (1, 1, C).
Value channel_mean(const Value& a);
/// x + bias broadcast over the spatial dims; bias is (1, 1, C).
Value add_channel_bias(const Value& x, const Value& bias);

/// Elementwise average of equally-shaped frames. The per-element reduction
/// sorts the operands by value first, so the result is bitwise invariant
/// under permutations of `frames`.
Value frame_average(const std::vector<Value>& frames);

// --- structural -------------------------------------------------------------
Value concat_channels(const std::vector<Value>& xs);
Value concat_rows(const std::vector<Value>& xs);
Value crop(const Value& x, int y0, int x0, int h, int w);

// --- neural primitives ------------------------------------------------------

/// 2-D convolution. `kernel` is (kh, kw, Cin*Cout) with the output channel
/// fastest: weight(ky, kx, ci, co) = kernel.at(ky, kx, ci*Cout + co).
/// `bias` is (1, 1, Cout). Differentiable in x, kernel, and bias.
Value conv2d(const Value& x, const Value& kernel, const Value& bias, int cout,
             int stride, int padding);

/// Elementwise x if x > 0 else slope[c] * x; `slope` is (1, 1, C).
Value prelu(const Value& x, const Value& slope);

/// Per-channel batch statistics captured by batch_norm_train so the caller
/// can maintain running averages.
struct BatchStats {
    std::vector<double> mean, var;
};

/// Training-mode batch norm: normalizes each channel over the spatial
/// positions of x, then applies scale/shift ((1,1,C) each).
Value batch_norm_train(const Value& x, const Value& scale, const Value& shift,
                       double eps, BatchStats* stats = nullptr);

/// Inference-mode batch norm with frozen statistics.
Value batch_norm_infer(const Value& x, const Value& scale, const Value& shift,
                       const std::vector<double>& running_mean,
                       const std::vector<double>& running_var, double eps);

/// Channel-to-space rearrangement: out(y*r+i, x*r+j, c) = in(y, x, c*r*r + i*r + j).
Value pixel_shuffle(const Value& x, int r);
/// Exact inverse permutation of pixel_shuffle.
Value pixel_unshuffle(const Value& x, int r);
Tensor pixel_shuffle_plain(const Tensor& x, int r);
Tensor pixel_unshuffle_plain(const Tensor& x, int r);

/// Corner-aligned bilinear resize, differentiable in x.
Value resize_bilinear(const Value& x, int target_h, int target_w);

} // namespace satfusion
