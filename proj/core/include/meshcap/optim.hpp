#pragma once

#include "meshcap/param_store.hpp"

namespace meshcap {

struct OptimHyper {
    double learning_rate{1e-4};
    double beta1{0.9};
    double beta2{0.999};
    double epsilon{1e-8};
    double weight_decay{0.01};

    void validate() const;  // throws std::invalid_argument
};

// One AdamW update over every non-frozen entry: decoupled weight decay applied
// multiplicatively before the bias-corrected Adam delta,
//   θ ← θ·(1 − lr·λ) − lr·m̂/(√v̂ + ε).
// Frozen entries stay bit-identical. All gradient accumulators (frozen ones
// included) are cleared afterwards.
void adamw_step(ParamStore& store, const OptimHyper& hyper);

}  // namespace meshcap
