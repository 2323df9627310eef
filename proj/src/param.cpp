#include "satfusion/param.hpp"

#include <cmath>

namespace satfusion {

namespace {

void sgd_step(Parameter& p, const Tensor* g, double lr) {
    if (!g) return;
    for (std::size_t i = 0; i < p.value.size(); ++i)
        p.value[i] = float(p.value[i] - lr * (*g)[i]);
}

void adam_step(Parameter& p, const Tensor* g, const OptimizerConfig& cfg) {
    if (p.m.empty()) {
        p.m = Tensor(p.value.height(), p.value.width(), p.value.channels());
        p.v = Tensor(p.value.height(), p.value.width(), p.value.channels());
    }
    p.step += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, double(p.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, double(p.step));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double gi = g ? double((*g)[i]) : 0.0;
        const double m = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * gi;
        const double v = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * gi * gi;
        p.m[i] = float(m);
        p.v[i] = float(v);
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p.value[i] = float(p.value[i] - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
}

} // namespace

void optimizer_step(const std::vector<Parameter*>& params,
                    const std::vector<const Tensor*>& grads, const OptimizerConfig& cfg) {
    if (params.size() != grads.size())
        throw UsageError("optimizer_step: params/grads length mismatch");
    if (cfg.lr < 0.0) throw ParamError("optimizer_step: negative learning rate");
    if (cfg.beta1 < 0.0 || cfg.beta1 >= 1.0 || cfg.beta2 < 0.0 || cfg.beta2 >= 1.0)
        throw ParamError("optimizer_step: betas must lie in [0, 1)");
    for (std::size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        if (!p.trainable) continue;
        if (grads[k] && !grads[k]->same_shape(p.value))
            throw ShapeError("optimizer_step: gradient shape mismatch for " + p.name);
        if (cfg.method == OptMethod::Sgd)
            sgd_step(p, grads[k], cfg.lr);
        else
            adam_step(p, grads[k], cfg);
    }
}

} // namespace satfusion
