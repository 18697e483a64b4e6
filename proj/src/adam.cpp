#include "ctfg/adam.hpp"

#include <cmath>

#include "ctfg/kernels.hpp"

namespace ctfg {

AdamState::AdamState(const ParamStore& params, AdamConfig cfg) : cfg_(cfg) {
    for (const auto& [name, value] : params.all()) {
        m_.emplace(name, Array::zeros_like(value));
        v_.emplace(name, Array::zeros_like(value));
    }
}

void adam_step(ParamStore& params, const ArrayMap& grads, AdamState& state) {
    ++state.step_;
    for (auto& [name, value] : params.all()) {
        auto git = grads.find(name);
        if (git == grads.end()) fail("adam_step: missing gradient for '" + name + "'");
        const Array& g = git->second;
        if (!(g.shape() == value.shape()))
            fail("adam_step: gradient shape " + shape_str(g.shape()) + " for '" + name +
                 "' differs from parameter shape " + shape_str(value.shape()));
        kernels::adam_update(value.numel(), value.data(), g.data(),
                             state.m_.at(name).data(), state.v_.at(name).data(),
                             state.step_, state.cfg_.lr, state.cfg_.beta1,
                             state.cfg_.beta2, state.cfg_.eps);
        if (checked_mode()) value.check_finite("parameter '" + name + "' after adam_step");
    }
}

double grad_l2_norm(const ArrayMap& grads) {
    double s = 0.0;
    for (const auto& [name, g] : grads)
        for (std::size_t i = 0; i < g.numel(); ++i) s += g.at(i) * g.at(i);
    return std::sqrt(s);
}

}  // namespace ctfg
