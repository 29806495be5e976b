#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "meshcap/rng.hpp"
#include "meshcap/tensor.hpp"

namespace meshcap {

// One named model parameter: value, gradient accumulator, AdamW moments.
// Frozen entries keep their gradient accumulator (the backward pass may write
// into it) but the optimizer never applies it.
struct Param {
    Tensor value;
    Tensor grad;
    bool frozen{false};
    Tensor m;  // first moment
    Tensor v;  // second moment
    std::int64_t steps{0};
};

// Name -> Param registry. std::map so every iteration (optimizer sweeps,
// checkpoint serialization, gradient checks) walks entries in one fixed
// order. References returned by add/at stay valid for the store's lifetime.
class ParamStore {
  public:
    Param& add(const std::string& name, Tensor init, bool frozen = false);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }

    void zero_grads();

    std::size_t size() const { return entries_.size(); }
    std::size_t value_count(bool trainable_only = false) const;

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

  private:
    std::map<std::string, Param> entries_;
};

// N(0, stddev²) tensor, entries drawn in row-major order.
Tensor gaussian(Rng& rng, std::vector<std::size_t> shape, double stddev);

}  // namespace meshcap
