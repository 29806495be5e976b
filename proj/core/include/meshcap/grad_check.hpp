#pragma once

#include <functional>
#include <string>
#include <vector>

#include "meshcap/param_store.hpp"

namespace meshcap {

struct GradCheckResult {
    std::string param_name;
    std::size_t index{0};
    double analytic{0.0};
    double numeric{0.0};
    double rel_err{0.0};
};

// |a − n| / max(|a|, |n|, floor) with floor = 1e-8.
double grad_rel_err(double analytic, double numeric);

// Central-difference check of d(loss)/d(theta) for every trainable entry of
// every parameter in `store` (or the subset named in `params`, empty = all).
// `loss` must populate gradients in the store as a side effect when
// `accumulate` is true and must be deterministic. Returns the worst offender
// per parameter, sorted by descending rel_err.
//
// Protocol: run loss once with accumulate=true to capture analytic grads,
// then for each entry perturb ±h and re-run with accumulate=false. When
// several steps are given, each entry keeps its best-agreeing estimate: no
// single h resolves both near-zero gradients (loss-ulp noise dominates as h
// shrinks) and high-curvature entries (truncation grows as h²), while a wrong
// analytic value disagrees at every h because the estimates converge to the
// true derivative.
std::vector<GradCheckResult> check_gradients(
    ParamStore& store,
    const std::function<double(bool accumulate)>& loss,
    const std::vector<double>& steps,
    const std::vector<std::string>& params = {});

inline std::vector<GradCheckResult> check_gradients(
    ParamStore& store,
    const std::function<double(bool accumulate)>& loss,
    double step = 1e-5,
    const std::vector<std::string>& params = {}) {
    return check_gradients(store, loss, std::vector<double>{step}, params);
}

// Largest rel_err across results (0 for empty).
double max_rel_err(const std::vector<GradCheckResult>& results);

}  // namespace meshcap
