#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "satfusion/autodiff.hpp"
#include "satfusion/tensor.hpp"

namespace satfusion {

/// A named, learnable tensor plus the per-parameter optimizer state for
/// adaptive updates.
struct Parameter {
    std::string name;
    Tensor value;
    bool trainable = true;
    // Adam moments; allocated lazily on the first adaptive step.
    Tensor m, v;
    std::int64_t step = 0;

    Parameter() = default;
    Parameter(std::string n, Tensor t, bool train = true)
        : name(std::move(n)), value(std::move(t)), trainable(train) {}

    void reset_optimizer_state() {
        m = Tensor();
        v = Tensor();
        step = 0;
    }
};

enum class OptMethod { Adam, Sgd };

struct OptimizerConfig {
    OptMethod method = OptMethod::Adam;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Applies one update to each parameter from the matching gradient. `grads`
/// entries may be null (treated as zero gradient; adam still advances its
/// step count so moment bias correction stays uniform).
void optimizer_step(const std::vector<Parameter*>& params,
                    const std::vector<const Tensor*>& grads, const OptimizerConfig& cfg);

/// Per-forward binding of parameters to graph leaves. One binding spans one
/// optimization step: reusing it across scenes of a batch accumulates their
/// gradients on the shared leaves (the explicit zero-grad is making a fresh
/// binding).
class GradBinding {
public:
    Value leaf_of(Parameter& p) {
        auto it = leaves_.find(&p);
        if (it != leaves_.end()) return it->second;
        Value v = make_value(p.value, p.trainable);
        leaves_.emplace(&p, v);
        return v;
    }

    /// Gradient accumulated on p's leaf, or null when p never entered the
    /// graph (disconnected parameters get no gradient).
    const Tensor* grad_of(const Parameter& p) const {
        auto it = leaves_.find(const_cast<Parameter*>(&p));
        if (it == leaves_.end() || it->second->grad.empty()) return nullptr;
        return &it->second->grad;
    }

private:
    std::unordered_map<Parameter*, Value> leaves_;
};

} // namespace satfusion
