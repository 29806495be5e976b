#pragma once

#include <cstdint>
#include <vector>

#include "meshcap/grad_check.hpp"

namespace meshcap {

// Toy dimensions for the full-model finite-difference sweep. Small enough that
// checking every trainable entry stays in the seconds range.
struct SelfCheckConfig {
    std::size_t n_layers{4};
    std::size_t d_model{16};
    std::size_t n_heads{2};
    std::size_t mesh_layers{2};
    std::size_t regions{3};
    std::size_t vocab_size{40};
    std::size_t seq_len{5};
    std::size_t feature_dim{8};
    double tau{0.3};
    // Step ladder: the large step resolves near-zero gradients (loss-ulp noise
    // scales as 1/h and must sit below the 1e-8 rel-err floor), the small one
    // resolves high-curvature entries (truncation scales as h²).
    std::vector<double> steps{1e-3, 1e-5};
    double gate_margin{2e-2};  // required sigmoid clearance from the SRAU thresholds
};

struct SelfCheckReport {
    std::vector<GradCheckResult> groups;  // worst entry per trainable tensor, desc
    double gate_margin{0.0};              // achieved clearance
    std::uint64_t seed_used{0};

    double worst_rel_err() const { return max_rel_err(groups); }
    bool passed(double tol = 1e-3) const { return !groups.empty() && worst_rel_err() < tol; }
};

// Builds a freshly converted toy model (pretrain init -> conversion -> encoder),
// randomizes the zero-started cross-attention output projections so every
// branch carries signal, picks a seed whose gate sigmoids stay clear of the
// thresholds, then finite-difference-checks every trainable parameter entry.
SelfCheckReport run_model_gradcheck(std::uint64_t seed, const SelfCheckConfig& cfg = {});

}  // namespace meshcap
