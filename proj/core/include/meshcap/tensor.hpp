#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace meshcap {

// Dense row-major tensor of 64-bit reals. Everything in the model path is
// double precision; finite-difference gradient checks at 1e-4 relative
// tolerance are not reachable in float.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> s);
    Tensor(std::vector<std::size_t> s, std::vector<double> d);

    static Tensor zeros(std::vector<std::size_t> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<std::size_t> s, double v);
    // 2-d convenience: rows given as nested initializer data.
    static Tensor from_rows(const std::vector<std::vector<double>>& rows);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double& at(std::size_t i, std::size_t j) { return data[i * cols_unchecked() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols_unchecked() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;

  private:
    std::size_t cols_unchecked() const { return shape.back(); }
};

std::string shape_string(const Tensor& t);

// Row-partitioned worker threads for the big matmuls. 1 disables threading.
// Results are bit-identical for any thread count (disjoint row writes, no
// cross-thread reductions).
void set_max_threads(int n);
int max_threads();

// ---------------------------------------------------------------------------
// elementwise / structural ops
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);      // [m×k]·[k×n]
Tensor matmul_tn(const Tensor& a, const Tensor& b);   // aᵀ·b, a:[k×m] b:[k×n] -> [m×n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);   // a·bᵀ, a:[m×k] b:[n×k] -> [m×n]
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
void add_inplace(Tensor& a, const Tensor& b);
void axpy_inplace(Tensor& a, double s, const Tensor& b);  // a += s*b

// Broadcast a length-n bias over every row of an [m×n] tensor.
Tensor add_row_broadcast(const Tensor& x, const Tensor& bias);
// Column sums of an [m×n] tensor -> length-n tensor (bias gradients).
Tensor colsum(const Tensor& x);

// Columns [c0, c0+len) of a 2-d tensor.
Tensor col_range(const Tensor& x, std::size_t c0, std::size_t len);
void add_col_range(Tensor& dst, std::size_t c0, const Tensor& src);

// Feature-axis concatenation [m×p] ∥ [m×q] -> [m×(p+q)], a first.
Tensor concat_features(const Tensor& a, const Tensor& b);

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

// Row-wise softmax with per-row max subtraction. -inf logits are legal and
// produce exact zeros (used by the causal mask).
Tensor softmax_rows(const Tensor& x);
// dx given y = softmax_rows(x) and dy.
Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy);

Tensor sigmoid(const Tensor& x);
double sigmoid_scalar(double x);
// dx given y = sigmoid(x) and dy.
Tensor sigmoid_backward(const Tensor& y, const Tensor& dy);

// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);
Tensor gelu_backward(const Tensor& x, const Tensor& dy);

// ---------------------------------------------------------------------------
// layer norm
// ---------------------------------------------------------------------------

struct LayerNormCache {
    Tensor xhat;                  // normalized rows
    std::vector<double> inv_std;  // 1/sqrt(var + eps) per row
};

// Per-row normalization to zero mean / unit variance (population variance,
// denominator sqrt(var + eps)), then gain ⊙ x̂ + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache = nullptr);

struct LayerNormGrads {
    Tensor dx;
    Tensor dgain;
    Tensor dbias;
};

LayerNormGrads layer_norm_backward(const Tensor& dy, const Tensor& gain,
                                   const LayerNormCache& cache);

}  // namespace meshcap
