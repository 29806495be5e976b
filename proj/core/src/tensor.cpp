#include "meshcap/tensor.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace meshcap {

namespace {

std::size_t checked_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0 && shape.size() == 1) return 0;  // length-0 vector is legal
        n *= d;
    }
    return n;
}

void require_2d(const Tensor& t, const char* who) {
    if (t.rank() != 2) {
        throw std::invalid_argument(std::string(who) + ": expected a 2-d tensor, got " +
                                    shape_string(t));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* who) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument(std::string(who) + ": shape mismatch " + shape_string(a) +
                                    " vs " + shape_string(b));
    }
}

std::atomic<int> g_max_threads{1};

}  // namespace

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(checked_product(shape), 0.0);
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (checked_product(shape) != data.size()) {
        throw std::invalid_argument("Tensor: shape/data length mismatch");
    }
}

Tensor Tensor::full(std::vector<std::size_t> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) throw std::invalid_argument("Tensor::from_rows: no rows");
    const std::size_t n = rows.front().size();
    Tensor t({rows.size(), n});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != n) throw std::invalid_argument("Tensor::from_rows: ragged rows");
        for (std::size_t j = 0; j < n; ++j) t.at(i, j) = rows[i][j];
    }
    return t;
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw std::logic_error("Tensor::rows on non-2d tensor " + shape_string(*this));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw std::logic_error("Tensor::cols on non-2d tensor " + shape_string(*this));
    return shape[1];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::string shape_string(const Tensor& t) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        if (i) os << 'x';
        os << t.shape[i];
    }
    os << ']';
    return os.str();
}

void set_max_threads(int n) { g_max_threads.store(n < 1 ? 1 : n); }
int max_threads() { return g_max_threads.load(); }

namespace {

// Run fn(r) for r in [0, rows). Partitioned by contiguous row blocks; worker
// count never affects results.
template <typename Fn>
void parallel_rows(std::size_t rows, std::size_t work_per_row, const Fn& fn) {
    const int want = max_threads();
    if (want <= 1 || rows < 2 || rows * work_per_row < 1u << 16) {
        for (std::size_t r = 0; r < rows; ++r) fn(r);
        return;
    }
    const std::size_t n_threads = std::min<std::size_t>(want, rows);
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    const std::size_t chunk = (rows + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
        const std::size_t lo = t * chunk;
        const std::size_t hi = std::min(rows, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &fn] {
            for (std::size_t r = lo; r < hi; ++r) fn(r);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions differ, " + shape_string(a) + " x " +
                                    shape_string(b));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c({m, n});
    parallel_rows(m, k * n, [&](std::size_t i) {
        const double* arow = a.data.data() + i * k;
        double* crow = c.data.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    });
    return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_tn");
    require_2d(b, "matmul_tn");
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("matmul_tn: leading dimensions differ, " + shape_string(a) +
                                    " x " + shape_string(b));
    }
    const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
    Tensor c({m, n});
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a.data.data() + p * m;
        const double* brow = b.data.data() + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul_nt");
    require_2d(b, "matmul_nt");
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: trailing dimensions differ, " + shape_string(a) +
                                    " x " + shape_string(b));
    }
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    Tensor c({m, n});
    parallel_rows(m, k * n, [&](std::size_t i) {
        const double* arow = a.data.data() + i * k;
        double* crow = c.data.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b.data.data() + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    });
    return c;
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    Tensor t({a.cols(), a.rows()});
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t.at(j, i) = a.at(i, j);
    return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] += b.data[i];
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] -= b.data[i];
    return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c.data[i] *= b.data[i];
    return c;
}

Tensor scale(const Tensor& a, double s) {
    Tensor c = a;
    for (double& v : c.data) v *= s;
    return c;
}

void add_inplace(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add_inplace");
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

void axpy_inplace(Tensor& a, double s, const Tensor& b) {
    require_same_shape(a, b, "axpy_inplace");
    for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += s * b.data[i];
}

Tensor add_row_broadcast(const Tensor& x, const Tensor& bias) {
    require_2d(x, "add_row_broadcast");
    if (bias.rank() != 1 || bias.size() != x.cols()) {
        throw std::invalid_argument("add_row_broadcast: bias " + shape_string(bias) +
                                    " does not match " + shape_string(x));
    }
    Tensor y = x;
    for (std::size_t i = 0; i < y.rows(); ++i)
        for (std::size_t j = 0; j < y.cols(); ++j) y.at(i, j) += bias.data[j];
    return y;
}

Tensor colsum(const Tensor& x) {
    require_2d(x, "colsum");
    Tensor s({x.cols()});
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) s.data[j] += x.at(i, j);
    return s;
}

Tensor col_range(const Tensor& x, std::size_t c0, std::size_t len) {
    require_2d(x, "col_range");
    if (c0 + len > x.cols()) throw std::invalid_argument("col_range: out of bounds");
    Tensor y({x.rows(), len});
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < len; ++j) y.at(i, j) = x.at(i, c0 + j);
    return y;
}

void add_col_range(Tensor& dst, std::size_t c0, const Tensor& src) {
    require_2d(dst, "add_col_range");
    require_2d(src, "add_col_range");
    if (src.rows() != dst.rows() || c0 + src.cols() > dst.cols()) {
        throw std::invalid_argument("add_col_range: block does not fit");
    }
    for (std::size_t i = 0; i < src.rows(); ++i)
        for (std::size_t j = 0; j < src.cols(); ++j) dst.at(i, c0 + j) += src.at(i, j);
}

Tensor concat_features(const Tensor& a, const Tensor& b) {
    require_2d(a, "concat_features");
    require_2d(b, "concat_features");
    if (a.rows() != b.rows()) {
        throw std::invalid_argument("concat_features: row counts differ, " + shape_string(a) +
                                    " vs " + shape_string(b));
    }
    Tensor c({a.rows(), a.cols() + b.cols()});
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) c.at(i, j) = a.at(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) c.at(i, a.cols() + j) = b.at(i, j);
    }
    return c;
}

Tensor softmax_rows(const Tensor& x) {
    require_2d(x, "softmax_rows");
    Tensor y = x;
    const std::size_t n = x.cols();
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double* row = y.data.data() + i * n;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    }
    return y;
}

Tensor softmax_rows_backward(const Tensor& y, const Tensor& dy) {
    require_same_shape(y, dy, "softmax_rows_backward");
    Tensor dx = y;
    const std::size_t n = y.cols();
    for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) dot += dy.at(i, j) * y.at(i, j);
        for (std::size_t j = 0; j < n; ++j) dx.at(i, j) = y.at(i, j) * (dy.at(i, j) - dot);
    }
    return dx;
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor sigmoid(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = sigmoid_scalar(v);
    return y;
}

Tensor sigmoid_backward(const Tensor& y, const Tensor& dy) {
    require_same_shape(y, dy, "sigmoid_backward");
    Tensor dx = y;
    for (std::size_t i = 0; i < y.size(); ++i) {
        dx.data[i] = dy.data[i] * y.data[i] * (1.0 - y.data[i]);
    }
    return dx;
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

Tensor gelu(const Tensor& x) {
    Tensor y = x;
    for (double& v : y.data) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    return y;
}

Tensor gelu_backward(const Tensor& x, const Tensor& dy) {
    require_same_shape(x, dy, "gelu_backward");
    Tensor dx = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = x.data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx.data[i] = dy.data[i] * (cdf + v * pdf);
    }
    return dx;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps,
                  LayerNormCache* cache) {
    require_2d(x, "layer_norm");
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be positive");
    if (gain.rank() != 1 || gain.size() != x.cols() || bias.rank() != 1 ||
        bias.size() != x.cols()) {
        throw std::invalid_argument("layer_norm: gain/bias do not match " + shape_string(x));
    }
    const std::size_t n = x.cols();
    Tensor y({x.rows(), n});
    Tensor xhat({x.rows(), n});
    std::vector<double> inv_std(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += x.at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = x.at(i, j) - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[i] = inv;
        for (std::size_t j = 0; j < n; ++j) {
            const double h = (x.at(i, j) - mean) * inv;
            xhat.at(i, j) = h;
            y.at(i, j) = gain.data[j] * h + bias.data[j];
        }
    }
    if (cache) {
        cache->xhat = std::move(xhat);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

LayerNormGrads layer_norm_backward(const Tensor& dy, const Tensor& gain,
                                   const LayerNormCache& cache) {
    const Tensor& xhat = cache.xhat;
    require_same_shape(dy, xhat, "layer_norm_backward");
    const std::size_t n = xhat.cols();
    LayerNormGrads g;
    g.dx = Tensor({xhat.rows(), n});
    g.dgain = Tensor({n});
    g.dbias = Tensor({n});
    for (std::size_t i = 0; i < xhat.rows(); ++i) {
        double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double dxh = dy.at(i, j) * gain.data[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xhat.at(i, j);
            g.dgain.data[j] += dy.at(i, j) * xhat.at(i, j);
            g.dbias.data[j] += dy.at(i, j);
        }
        mean_dxhat /= static_cast<double>(n);
        mean_dxhat_xhat /= static_cast<double>(n);
        for (std::size_t j = 0; j < n; ++j) {
            const double dxh = dy.at(i, j) * gain.data[j];
            g.dx.at(i, j) =
                cache.inv_std[i] * (dxh - mean_dxhat - xhat.at(i, j) * mean_dxhat_xhat);
        }
    }
    return g;
}

}  // namespace meshcap
