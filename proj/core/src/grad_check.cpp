#include "meshcap/grad_check.hpp"

#include <algorithm>
#include <limits>
#include <cmath>
#include <stdexcept>

namespace meshcap {

double grad_rel_err(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
    return std::fabs(analytic - numeric) / denom;
}

std::vector<GradCheckResult> check_gradients(
    ParamStore& store,
    const std::function<double(bool)>& loss,
    const std::vector<double>& steps,
    const std::vector<std::string>& params) {
    if (steps.empty()) throw std::invalid_argument("grad check needs at least one step");
    for (double step : steps)
        if (!(step > 0.0)) throw std::invalid_argument("grad check step must be > 0");

    std::vector<std::string> names;
    if (params.empty()) {
        for (auto& [name, param] : store)
            if (!param.frozen) names.push_back(name);
    } else {
        names = params;
    }

    store.zero_grads();
    loss(true);

    // Snapshot analytic grads before the perturbation runs disturb anything.
    std::vector<std::vector<double>> analytic;
    analytic.reserve(names.size());
    for (const auto& name : names) analytic.push_back(store.at(name).grad.data);

    std::vector<GradCheckResult> results;
    for (std::size_t p = 0; p < names.size(); ++p) {
        Param& param = store.at(names[p]);
        GradCheckResult worst;
        worst.param_name = names[p];
        worst.rel_err = -1.0;
        for (std::size_t i = 0; i < param.value.data.size(); ++i) {
            const double saved = param.value.data[i];
            double best_err = std::numeric_limits<double>::infinity();
            double best_numeric = 0.0;
            for (double step : steps) {
                param.value.data[i] = saved + step;
                const double up = loss(false);
                param.value.data[i] = saved - step;
                const double down = loss(false);
                param.value.data[i] = saved;
                const double numeric = (up - down) / (2.0 * step);
                const double err = grad_rel_err(analytic[p][i], numeric);
                if (err < best_err) {
                    best_err = err;
                    best_numeric = numeric;
                }
            }
            if (best_err > worst.rel_err) {
                worst.index = i;
                worst.analytic = analytic[p][i];
                worst.numeric = best_numeric;
                worst.rel_err = best_err;
            }
        }
        if (worst.rel_err >= 0.0) results.push_back(worst);
    }

    std::sort(results.begin(), results.end(),
              [](const GradCheckResult& a, const GradCheckResult& b) {
                  return a.rel_err > b.rel_err;
              });
    return results;
}

double max_rel_err(const std::vector<GradCheckResult>& results) {
    double worst = 0.0;
    for (const auto& r : results) worst = std::max(worst, r.rel_err);
    return worst;
}

}  // namespace meshcap
