#include "meshcap/loss.hpp"

#include <cmath>
#include <stdexcept>

namespace meshcap {

double cross_entropy(const Tensor& logits,
                     const std::vector<std::int64_t>& targets,
                     std::int64_t ignore_id,
                     Tensor* dlogits) {
    const std::size_t t_len = logits.rows();
    const std::size_t vocab = logits.cols();
    if (targets.size() != t_len)
        throw std::invalid_argument("cross_entropy: targets length != logit rows");

    std::size_t counted = 0;
    for (std::int64_t tgt : targets)
        if (tgt != ignore_id) ++counted;
    if (counted == 0) throw std::invalid_argument("cross_entropy: every position ignored");

    if (dlogits) *dlogits = Tensor::zeros({t_len, vocab});

    double total = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
        const std::int64_t tgt = targets[t];
        if (tgt == ignore_id) continue;
        if (tgt < 0 || static_cast<std::size_t>(tgt) >= vocab)
            throw std::invalid_argument("cross_entropy: target id out of vocab range");
        const double* row = logits.data.data() + t * vocab;
        double row_max = row[0];
        for (std::size_t v = 1; v < vocab; ++v) row_max = std::max(row_max, row[v]);
        double denom = 0.0;
        for (std::size_t v = 0; v < vocab; ++v) denom += std::exp(row[v] - row_max);
        const double log_denom = std::log(denom) + row_max;
        total += log_denom - row[static_cast<std::size_t>(tgt)];
        if (dlogits) {
            double* drow = dlogits->data.data() + t * vocab;
            const double inv = 1.0 / static_cast<double>(counted);
            for (std::size_t v = 0; v < vocab; ++v) {
                const double p = std::exp(row[v] - log_denom);
                drow[v] = p * inv;
            }
            drow[static_cast<std::size_t>(tgt)] -= inv;
        }
    }
    return total / static_cast<double>(counted);
}

}  // namespace meshcap
