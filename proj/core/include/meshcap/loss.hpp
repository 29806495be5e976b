#pragma once

#include <cstdint>
#include <vector>

#include "meshcap/tensor.hpp"

namespace meshcap {

// Mean token-level cross entropy of row-wise logits [T, V] against integer
// targets, skipping positions whose target equals ignore_id. Throws if every
// position is ignored. When dlogits is non-null it receives d(loss)/d(logits)
// (same shape; ignored rows all-zero).
double cross_entropy(const Tensor& logits,
                     const std::vector<std::int64_t>& targets,
                     std::int64_t ignore_id,
                     Tensor* dlogits = nullptr);

}  // namespace meshcap
