#pragma once

#include <cstddef>

// Dense f64 kernels. Every kernel has a serial reference and an OpenMP
// variant; the two produce bit-identical output because parallelism is only
// ever across independent output elements (rows, columns, or flat indices)
// and each element's arithmetic runs in the same order in both. Scalar
// reductions (sum_all) combine per-row partials serially in index order and
// are therefore serial-only by design.
namespace ctfg::kernels {

enum class Backend { serial, openmp };

// Process-wide dispatch switch, default openmp.
Backend& backend();

enum class EwOp { add, sub, mul };
enum class UnOp { exp, log, gelu, gelu_grad, recip };

namespace serial {
void ew(EwOp op, std::size_t n, const double* a, const double* b, double* out);
void ew_scalar(EwOp op, std::size_t n, const double* a, double s, double* out);
void ew_row(EwOp op, std::size_t m, std::size_t n, const double* a, const double* row,
            double* out);
void unary(UnOp op, std::size_t n, const double* x, double* out);
void acc(std::size_t n, const double* x, double* y);
void scale_acc(std::size_t n, double alpha, const double* x, double* y);
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void transpose(std::size_t m, std::size_t n, const double* x, double* y);
void softmax_rows(std::size_t m, std::size_t n, const double* x, double* y);
void softmax_rows_bwd(std::size_t m, std::size_t n, const double* y, const double* gy,
                      double* gx);
void layer_norm_rows(std::size_t m, std::size_t n, double eps, const double* x, double* y);
void layer_norm_rows_bwd(std::size_t m, std::size_t n, double eps, const double* x,
                         const double* gy, double* gx);
void masked_fill(std::size_t n, const double* x, const double* mask, double fill, double* out);
void masked_fill_bwd(std::size_t n, const double* mask, const double* gy, double* gx);
void compare(std::size_t n, const double* a, const double* b, bool greater, double* out);
void sum_axis0(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate);
void sum_axis1(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate);
void adam_update(std::size_t n, double* p, const double* g, double* m, double* v, long step,
                 double lr, double beta1, double beta2, double eps);
}  // namespace serial

namespace omp {
void ew(EwOp op, std::size_t n, const double* a, const double* b, double* out);
void ew_scalar(EwOp op, std::size_t n, const double* a, double s, double* out);
void ew_row(EwOp op, std::size_t m, std::size_t n, const double* a, const double* row,
            double* out);
void unary(UnOp op, std::size_t n, const double* x, double* out);
void acc(std::size_t n, const double* x, double* y);
void scale_acc(std::size_t n, double alpha, const double* x, double* y);
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void transpose(std::size_t m, std::size_t n, const double* x, double* y);
void softmax_rows(std::size_t m, std::size_t n, const double* x, double* y);
void softmax_rows_bwd(std::size_t m, std::size_t n, const double* y, const double* gy,
                      double* gx);
void layer_norm_rows(std::size_t m, std::size_t n, double eps, const double* x, double* y);
void layer_norm_rows_bwd(std::size_t m, std::size_t n, double eps, const double* x,
                         const double* gy, double* gx);
void masked_fill(std::size_t n, const double* x, const double* mask, double fill, double* out);
void masked_fill_bwd(std::size_t n, const double* mask, const double* gy, double* gx);
void compare(std::size_t n, const double* a, const double* b, bool greater, double* out);
void sum_axis0(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate);
void sum_axis1(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate);
void adam_update(std::size_t n, double* p, const double* g, double* m, double* v, long step,
                 double lr, double beta1, double beta2, double eps);
}  // namespace omp

// Dispatchers on backend().
void ew(EwOp op, std::size_t n, const double* a, const double* b, double* out);
void ew_scalar(EwOp op, std::size_t n, const double* a, double s, double* out);
void ew_row(EwOp op, std::size_t m, std::size_t n, const double* a, const double* row,
            double* out);
void unary(UnOp op, std::size_t n, const double* x, double* out);
void acc(std::size_t n, const double* x, double* y);
void scale_acc(std::size_t n, double alpha, const double* x, double* y);
void matmul_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void matmul_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
               std::size_t n, bool accumulate);
void transpose(std::size_t m, std::size_t n, const double* x, double* y);
void softmax_rows(std::size_t m, std::size_t n, const double* x, double* y);
void softmax_rows_bwd(std::size_t m, std::size_t n, const double* y, const double* gy,
                      double* gx);
void layer_norm_rows(std::size_t m, std::size_t n, double eps, const double* x, double* y);
void layer_norm_rows_bwd(std::size_t m, std::size_t n, double eps, const double* x,
                         const double* gy, double* gx);
void masked_fill(std::size_t n, const double* x, const double* mask, double fill, double* out);
void masked_fill_bwd(std::size_t n, const double* mask, const double* gy, double* gx);
void compare(std::size_t n, const double* a, const double* b, bool greater, double* out);
void sum_axis0(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate);
void sum_axis1(std::size_t m, std::size_t n, const double* x, double* out, bool accumulate);
double sum_all(std::size_t n, const double* x);
void adam_update(std::size_t n, double* p, const double* g, double* m, double* v, long step,
                 double lr, double beta1, double beta2, double eps);

}  // namespace ctfg::kernels
