#pragma once

#include "ctfg/graph.hpp"

namespace ctfg {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// First/second moment buffers per parameter plus the shared step counter used
// for bias correction. One AdamState per parameter store.
class AdamState {
public:
    AdamState(const ParamStore& params, AdamConfig cfg);

    long step() const { return step_; }
    const AdamConfig& config() const { return cfg_; }
    const Array& m(const std::string& name) const { return m_.at(name); }
    const Array& v(const std::string& name) const { return v_.at(name); }

    friend void adam_step(ParamStore& params, const ArrayMap& grads, AdamState& state);

private:
    AdamConfig cfg_;
    long step_ = 0;
    std::map<std::string, Array> m_;
    std::map<std::string, Array> v_;
};

// In-place bias-corrected Adam update. Every parameter must have a gradient
// of matching shape in grads.
void adam_step(ParamStore& params, const ArrayMap& grads, AdamState& state);

// L2 norm over all entries of a gradient map, combined in name order.
double grad_l2_norm(const ArrayMap& grads);

}  // namespace ctfg
