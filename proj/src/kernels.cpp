#include "ctfg/kernels.hpp"

#include <cmath>
#include <cstring>
#include <numbers>

namespace ctfg::kernels {

Backend& backend() {
    static Backend b = Backend::openmp;
    return b;
}

namespace {

// Per-element and per-row bodies shared by the serial and OpenMP variants.
// Keeping the arithmetic in one place is what makes the two backends
// bit-identical.

inline double ew_one(EwOp op, double a, double b) {
    switch (op) {
        case EwOp::add: return a + b;
        case EwOp::sub: return a - b;
        case EwOp::mul: return a * b;
    }
    return 0.0;
}

inline double unary_one(UnOp op, double x) {
    switch (op) {
        case UnOp::exp: return std::exp(x);
        case UnOp::log: return std::log(x);
        case UnOp::gelu: return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
        case UnOp::gelu_grad:
            return 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2)) +
                   x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        case UnOp::recip: return 1.0 / x;
    }
    return 0.0;
}

inline double dot_nn(const double* a, const double* b, std::size_t i, std::size_t j,
                     std::size_t k, std::size_t n) {
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * n + j];
    return s;
}

inline double dot_nt(const double* a, const double* b, std::size_t i, std::size_t j,
                     std::size_t k) {
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
    return s;
}

inline double dot_tn(const double* a, const double* b, std::size_t i, std::size_t j,
                     std::size_t m, std::size_t k, std::size_t n) {
    // c[i,j] = sum_t a[t,i] * b[t,j], a is k x m, b is k x n
    (void)m;
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t) s += a[t * m + i] * b[t * n + j];
    return s;
}

inline void softmax_row(std::size_t n, const double* x, double* y) {
    double hi = x[0];
    for (std::size_t j = 1; j < n; ++j) hi = std::max(hi, x[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        y[j] = std::exp(x[j] - hi);
        z += y[j];
    }
    double inv = 1.0 / z;
    for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

inline void softmax_row_bwd(std::size_t n, const double* y, const double* gy, double* gx) {
    double dot = 0.0;
    for (std::size_t j = 0; j < n; ++j) dot += gy[j] * y[j];
    for (std::size_t j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dot);
}

inline void layer_norm_row(std::size_t n, double eps, const double* x, double* y) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    double r = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) y[j] = (x[j] - mu) * r;
}

inline void layer_norm_row_bwd(std::size_t n, double eps, const double* x, const double* gy,
                               double* gx) {
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += x[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= static_cast<double>(n);
    double r = 1.0 / std::sqrt(var + eps);
    double gmean = 0.0, gxhat = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        gmean += gy[j];
        gxhat += gy[j] * (x[j] - mu) * r;
    }
    gmean /= static_cast<double>(n);
    gxhat /= static_cast<double>(n);
    for (std::size_t j = 0; j < n; ++j)
        gx[j] += r * (gy[j] - gmean - (x[j] - mu) * r * gxhat);
}

inline double col_sum(std::size_t m, std::size_t n, const double* x, std::size_t j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += x[i * n + j];
    return s;
}

inline double row_sum(std::size_t n, const double* x) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += x[j];
    return s;
}

inline void adam_one(double* p, const double* g, double* m, double* v, std::size_t i,
                     double lr, double beta1, double beta2, double eps, double bc1,
                     double bc2) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    double mhat = m[i] / bc1;
    double vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
}

constexpr std::size_t kGrain = 2048;  // skip thread spawn for tiny work

}  // namespace

// ---------------------------------------------------------------- serial

namespace serial {

void ew(EwOp op, std::size_t n, const double* a, const double* b, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = ew_one(op, a[i], b[i]);
}

void ew_scalar(EwOp op, std::size_t n, const double* a, double s, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = ew_one(op, a[i], s);
}

void ew_row(EwOp op, std::size_t m, std::size_t n, const double* a, const double* row,
            double* out) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out[i * n + j] = ew_one(op, a[i * n + j], row[j]);
}

void unary(UnOp op, std::size_t n, const double* x, double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = unary_one(op, x[i]);
}

void acc(std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void scale_acc(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = dot_nn(a, b, i, j, k, n);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = dot_nt(a, b, i, j, k);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = dot_tn(a, b, i, j, m, k, n);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void transpose(std::size_t m, std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
}

void softmax_rows(std::size_t m, std::size_t n, const double* x, double* y) {
    for (std::size_t i = 0; i < m; ++i) softmax_row(n, x + i * n, y + i * n);
}

void softmax_rows_bwd(std::size_t m, std::size_t n, const double* y, const double* gy,
                      double* gx) {
    for (std::size_t i = 0; i < m; ++i)
        softmax_row_bwd(n, y + i * n, gy + i * n, gx + i * n);
}

void layer_norm_rows(std::size_t m, std::size_t n, double eps, const double* x, double* y) {
    for (std::size_t i = 0; i < m; ++i) layer_norm_row(n, eps, x + i * n, y + i * n);
}

void layer_norm_rows_bwd(std::size_t m, std::size_t n, double eps, const double* x,
                         const double* gy, double* gx) {
    for (std::size_t i = 0; i < m; ++i)
        layer_norm_row_bwd(n, eps, x + i * n, gy + i * n, gx + i * n);
}

void masked_fill(std::size_t n, const double* x, const double* mask, double fill,
                 double* out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = mask[i] != 0.0 ? fill : x[i];
}

void masked_fill_bwd(std::size_t n, const double* mask, const double* gy, double* gx) {
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i] == 0.0) gx[i] += gy[i];
}

void compare(std::size_t n, const double* a, const double* b, bool greater, double* out) {
    for (std::size_t i = 0; i < n; ++i)
        out[i] = (greater ? a[i] > b[i] : a[i] < b[i]) ? 1.0 : 0.0;
}

void sum_axis0(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate) {
    for (std::size_t j = 0; j < n; ++j) {
        double s = col_sum(m, n, x, j);
        out[j] = accumulate ? out[j] + s : s;
    }
}

void sum_axis1(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        double s = row_sum(n, x + i * n);
        out[i] = accumulate ? out[i] + s : s;
    }
}

void adam_update(std::size_t n, double* p, const double* g, double* m, double* v, long step,
                 double lr, double beta1, double beta2, double eps) {
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < n; ++i) adam_one(p, g, m, v, i, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace serial

// ---------------------------------------------------------------- openmp

namespace omp {

void ew(EwOp op, std::size_t n, const double* a, const double* b, double* out) {
#pragma omp parallel for schedule(static) if (n >= kGrain)
    for (std::size_t i = 0; i < n; ++i) out[i] = ew_one(op, a[i], b[i]);
}

void ew_scalar(EwOp op, std::size_t n, const double* a, double s, double* out) {
#pragma omp parallel for schedule(static) if (n >= kGrain)
    for (std::size_t i = 0; i < n; ++i) out[i] = ew_one(op, a[i], s);
}

void ew_row(EwOp op, std::size_t m, std::size_t n, const double* a, const double* row,
            double* out) {
#pragma omp parallel for schedule(static) if (m * n >= kGrain)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out[i * n + j] = ew_one(op, a[i * n + j], row[j]);
}

void unary(UnOp op, std::size_t n, const double* x, double* out) {
#pragma omp parallel for schedule(static) if (n >= kGrain / 4)
    for (std::size_t i = 0; i < n; ++i) out[i] = unary_one(op, x[i]);
}

void acc(std::size_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (n >= kGrain)
    for (std::size_t i = 0; i < n; ++i) y[i] += x[i];
}

void scale_acc(std::size_t n, double alpha, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (n >= kGrain)
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (m * n * k >= kGrain)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = dot_nn(a, b, i, j, k, n);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (m * n * k >= kGrain)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = dot_nt(a, b, i, j, k);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
#pragma omp parallel for schedule(static) if (m * n * k >= kGrain)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = dot_tn(a, b, i, j, m, k, n);
            c[i * n + j] = accumulate ? c[i * n + j] + s : s;
        }
}

void transpose(std::size_t m, std::size_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (m * n >= kGrain)
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) y[j * m + i] = x[i * n + j];
}

void softmax_rows(std::size_t m, std::size_t n, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (m * n >= kGrain)
    for (std::size_t i = 0; i < m; ++i) softmax_row(n, x + i * n, y + i * n);
}

void softmax_rows_bwd(std::size_t m, std::size_t n, const double* y, const double* gy,
                      double* gx) {
#pragma omp parallel for schedule(static) if (m * n >= kGrain)
    for (std::size_t i = 0; i < m; ++i)
        softmax_row_bwd(n, y + i * n, gy + i * n, gx + i * n);
}

void layer_norm_rows(std::size_t m, std::size_t n, double eps, const double* x, double* y) {
#pragma omp parallel for schedule(static) if (m * n >= kGrain)
    for (std::size_t i = 0; i < m; ++i) layer_norm_row(n, eps, x + i * n, y + i * n);
}

void layer_norm_rows_bwd(std::size_t m, std::size_t n, double eps, const double* x,
                         const double* gy, double* gx) {
#pragma omp parallel for schedule(static) if (m * n >= kGrain)
    for (std::size_t i = 0; i < m; ++i)
        layer_norm_row_bwd(n, eps, x + i * n, gy + i * n, gx + i * n);
}

void masked_fill(std::size_t n, const double* x, const double* mask, double fill,
                 double* out) {
#pragma omp parallel for schedule(static) if (n >= kGrain)
    for (std::size_t i = 0; i < n; ++i) out[i] = mask[i] != 0.0 ? fill : x[i];
}

void masked_fill_bwd(std::size_t n, const double* mask, const double* gy, double* gx) {
#pragma omp parallel for schedule(static) if (n >= kGrain)
    for (std::size_t i = 0; i < n; ++i)
        if (mask[i] == 0.0) gx[i] += gy[i];
}

void compare(std::size_t n, const double* a, const double* b, bool greater, double* out) {
#pragma omp parallel for schedule(static) if (n >= kGrain)
    for (std::size_t i = 0; i < n; ++i)
        out[i] = (greater ? a[i] > b[i] : a[i] < b[i]) ? 1.0 : 0.0;
}

void sum_axis0(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate) {
    // One column per iteration; each column is summed serially top to bottom.
#pragma omp parallel for schedule(static) if (m * n >= kGrain)
    for (std::size_t j = 0; j < n; ++j) {
        double s = col_sum(m, n, x, j);
        out[j] = accumulate ? out[j] + s : s;
    }
}

void sum_axis1(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate) {
#pragma omp parallel for schedule(static) if (m * n >= kGrain)
    for (std::size_t i = 0; i < m; ++i) {
        double s = row_sum(n, x + i * n);
        out[i] = accumulate ? out[i] + s : s;
    }
}

void adam_update(std::size_t n, double* p, const double* g, double* m, double* v, long step,
                 double lr, double beta1, double beta2, double eps) {
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
#pragma omp parallel for schedule(static) if (n >= kGrain)
    for (std::size_t i = 0; i < n; ++i) adam_one(p, g, m, v, i, lr, beta1, beta2, eps, bc1, bc2);
}

}  // namespace omp

// ------------------------------------------------------------- dispatch

#define CTFG_DISPATCH(fn, ...)                    \
    do {                                          \
        if (backend() == Backend::serial)         \
            serial::fn(__VA_ARGS__);              \
        else                                      \
            omp::fn(__VA_ARGS__);                 \
    } while (0)

void ew(EwOp op, std::size_t n, const double* a, const double* b, double* out) {
    CTFG_DISPATCH(ew, op, n, a, b, out);
}
void ew_scalar(EwOp op, std::size_t n, const double* a, double s, double* out) {
    CTFG_DISPATCH(ew_scalar, op, n, a, s, out);
}
void ew_row(EwOp op, std::size_t m, std::size_t n, const double* a, const double* row,
            double* out) {
    CTFG_DISPATCH(ew_row, op, m, n, a, row, out);
}
void unary(UnOp op, std::size_t n, const double* x, double* out) {
    CTFG_DISPATCH(unary, op, n, x, out);
}
void acc(std::size_t n, const double* x, double* y) { CTFG_DISPATCH(acc, n, x, y); }
void scale_acc(std::size_t n, double alpha, const double* x, double* y) {
    CTFG_DISPATCH(scale_acc, n, alpha, x, y);
}
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
    CTFG_DISPATCH(matmul_nn, a, b, c, m, k, n, accumulate);
}
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
    CTFG_DISPATCH(matmul_nt, a, b, c, m, k, n, accumulate);
}
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate) {
    CTFG_DISPATCH(matmul_tn, a, b, c, m, k, n, accumulate);
}
void transpose(std::size_t m, std::size_t n, const double* x, double* y) {
    CTFG_DISPATCH(transpose, m, n, x, y);
}
void softmax_rows(std::size_t m, std::size_t n, const double* x, double* y) {
    CTFG_DISPATCH(softmax_rows, m, n, x, y);
}
void softmax_rows_bwd(std::size_t m, std::size_t n, const double* y, const double* gy,
                      double* gx) {
    CTFG_DISPATCH(softmax_rows_bwd, m, n, y, gy, gx);
}
void layer_norm_rows(std::size_t m, std::size_t n, double eps, const double* x, double* y) {
    CTFG_DISPATCH(layer_norm_rows, m, n, eps, x, y);
}
void layer_norm_rows_bwd(std::size_t m, std::size_t n, double eps, const double* x,
                         const double* gy, double* gx) {
    CTFG_DISPATCH(layer_norm_rows_bwd, m, n, eps, x, gy, gx);
}
void masked_fill(std::size_t n, const double* x, const double* mask, double fill,
                 double* out) {
    CTFG_DISPATCH(masked_fill, n, x, mask, fill, out);
}
void masked_fill_bwd(std::size_t n, const double* mask, const double* gy, double* gx) {
    CTFG_DISPATCH(masked_fill_bwd, n, mask, gy, gx);
}
void compare(std::size_t n, const double* a, const double* b, bool greater, double* out) {
    CTFG_DISPATCH(compare, n, a, b, greater, out);
}
void sum_axis0(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate) {
    CTFG_DISPATCH(sum_axis0, m, n, x, out, accumulate);
}
void sum_axis1(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate) {
    CTFG_DISPATCH(sum_axis1, m, n, x, out, accumulate);
}

double sum_all(std::size_t n, const double* x) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i];
    return s;
}

void adam_update(std::size_t n, double* p, const double* g, double* m, double* v, long step,
                 double lr, double beta1, double beta2, double eps) {
    CTFG_DISPATCH(adam_update, n, p, g, m, v, step, lr, beta1, beta2, eps);
}

#undef CTFG_DISPATCH

}  // namespace ctfg::kernels
