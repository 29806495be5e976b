#include "meshcap/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace meshcap {

void OptimHyper::validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must be in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
    if (weight_decay < 0.0) throw std::invalid_argument("weight_decay must be >= 0");
}

void adamw_step(ParamStore& store, const OptimHyper& hyper) {
    hyper.validate();
    for (auto& [name, param] : store) {
        if (!param.frozen) {
            param.steps += 1;
            const double t = static_cast<double>(param.steps);
            const double bc1 = 1.0 - std::pow(hyper.beta1, t);
            const double bc2 = 1.0 - std::pow(hyper.beta2, t);
            const double decay = 1.0 - hyper.learning_rate * hyper.weight_decay;
            double* theta = param.value.data.data();
            double* g = param.grad.data.data();
            double* m = param.m.data.data();
            double* v = param.v.data.data();
            const std::size_t n = param.value.data.size();
            for (std::size_t i = 0; i < n; ++i) {
                m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
                v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
                const double m_hat = m[i] / bc1;
                const double v_hat = v[i] / bc2;
                theta[i] = theta[i] * decay -
                           hyper.learning_rate * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
            }
        }
        std::fill(param.grad.data.begin(), param.grad.data.end(), 0.0);
    }
}

}  // namespace meshcap
