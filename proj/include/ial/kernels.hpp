#pragma once

#include <cstddef>
#include <span>

// Dense kernels behind the autodiff tape. Every kernel exists twice: a plain
// serial reference in ial::kernels::serial and an OpenMP version in
// ial::kernels. Both accumulate each output element in the same order, so the
// results are bitwise identical; tests rely on that.

namespace ial::kernels {

namespace serial {

// c[n,m] = a[n,k] * b[k,m]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m);
// c[k,m] += a[n,k]^T * g[n,m]
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                     std::span<double> c, std::size_t n, std::size_t k, std::size_t m);
// c[n,k] += g[n,m] * b[k,m]^T
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                     std::span<double> c, std::size_t n, std::size_t k, std::size_t m);
// out[r,c] = x[r,c] + row[c]
void add_row(std::span<const double> x, std::span<const double> row,
             std::span<double> out, std::size_t rows, std::size_t cols);
// out[c] += sum_r g[r,c]
void column_sum_acc(std::span<const double> g, std::span<double> out, std::size_t rows,
                    std::size_t cols);
void tanh(std::span<const double> x, std::span<double> out);

} // namespace serial

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m);
void matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                     std::span<double> c, std::size_t n, std::size_t k, std::size_t m);
void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                     std::span<double> c, std::size_t n, std::size_t k, std::size_t m);
void add_row(std::span<const double> x, std::span<const double> row,
             std::span<double> out, std::size_t rows, std::size_t cols);
void column_sum_acc(std::span<const double> g, std::span<double> out, std::size_t rows,
                    std::size_t cols);
void tanh(std::span<const double> x, std::span<double> out);

/// Work below this many multiply-adds stays on the calling thread.
inline constexpr std::size_t parallel_threshold = 1u << 14;

} // namespace ial::kernels
