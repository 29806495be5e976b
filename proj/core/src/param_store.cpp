#include "meshcap/param_store.hpp"

#include <algorithm>
#include <stdexcept>

namespace meshcap {

Param& ParamStore::add(const std::string& name, Tensor init, bool frozen) {
    if (contains(name)) {
        throw std::invalid_argument("ParamStore::add: duplicate parameter '" + name + "'");
    }
    Param p;
    p.grad = Tensor(init.shape);
    p.m = Tensor(init.shape);
    p.v = Tensor(init.shape);
    p.value = std::move(init);
    p.frozen = frozen;
    return entries_.emplace(name, std::move(p)).first->second;
}

Param& ParamStore::at(const std::string& name) {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw std::out_of_range("ParamStore::at: unknown parameter '" + name + "'");
    }
    return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw std::out_of_range("ParamStore::at: unknown parameter '" + name + "'");
    }
    return it->second;
}

void ParamStore::zero_grads() {
    for (auto& [name, p] : entries_) {
        std::fill(p.grad.data.begin(), p.grad.data.end(), 0.0);
    }
}

std::size_t ParamStore::value_count(bool trainable_only) const {
    std::size_t n = 0;
    for (const auto& [name, p] : entries_) {
        if (trainable_only && p.frozen) continue;
        n += p.value.size();
    }
    return n;
}

Tensor gaussian(Rng& rng, std::vector<std::size_t> shape, double stddev) {
    Tensor t(std::move(shape));
    for (double& x : t.data) x = rng.normal(0.0, stddev);
    return t;
}

}  // namespace meshcap
