#include "ial/kernels.hpp"

#include <cmath>
#include <cstdint>

namespace ial::kernels {

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        double* ci = c.data() + i * m;
        for (std::size_t j = 0; j < m; ++j)
            ci[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j)
                ci[j] += aip * bp[j];
        }
    }
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                     std::span<double> c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < k; ++i) {
        double* ci = c.data() + i * m;
        for (std::size_t r = 0; r < n; ++r) {
            const double ari = a[r * k + i];
            const double* gr = g.data() + r * m;
            for (std::size_t j = 0; j < m; ++j)
                ci[j] += ari * gr[j];
        }
    }
}

void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                     std::span<double> c, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* gi = g.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b.data() + p * m;
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                acc += gi[j] * bp[j];
            c[i * k + p] += acc;
        }
    }
}

void add_row(std::span<const double> x, std::span<const double> row,
             std::span<double> out, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j)
            out[r * cols + j] = x[r * cols + j] + row[j];
}

void column_sum_acc(std::span<const double> g, std::span<double> out, std::size_t rows,
                    std::size_t cols) {
    for (std::size_t j = 0; j < cols; ++j) {
        double acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r)
            acc += g[r * cols + j];
        out[j] += acc;
    }
}

void tanh(std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i)
        out[i] = std::tanh(x[i]);
}

} // namespace serial

// The parallel versions split over output rows only. The per-element
// accumulation order matches the serial loops above.

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t n, std::size_t k, std::size_t m) {
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m >= parallel_threshold)
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* ci = c.data() + i * m;
        for (std::size_t j = 0; j < m; ++j)
            ci[j] = 0.0;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = a[i * k + p];
            const double* bp = b.data() + p * m;
            for (std::size_t j = 0; j < m; ++j)
                ci[j] += aip * bp[j];
        }
    }
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> g,
                     std::span<double> c, std::size_t n, std::size_t k, std::size_t m) {
    const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (n * k * m >= parallel_threshold)
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double* ci = c.data() + i * m;
        for (std::size_t r = 0; r < n; ++r) {
            const double ari = a[r * k + i];
            const double* gr = g.data() + r * m;
            for (std::size_t j = 0; j < m; ++j)
                ci[j] += ari * gr[j];
        }
    }
}

void matmul_a_bt_acc(std::span<const double> g, std::span<const double> b,
                     std::span<double> c, std::size_t n, std::size_t k, std::size_t m) {
    const auto rows = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static) if (n * k * m >= parallel_threshold)
    for (std::int64_t ii = 0; ii < rows; ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        const double* gi = g.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b.data() + p * m;
            double acc = 0.0;
            for (std::size_t j = 0; j < m; ++j)
                acc += gi[j] * bp[j];
            c[i * k + p] += acc;
        }
    }
}

void add_row(std::span<const double> x, std::span<const double> row,
             std::span<double> out, std::size_t rows, std::size_t cols) {
    const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= parallel_threshold)
    for (std::int64_t rr = 0; rr < n; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        for (std::size_t j = 0; j < cols; ++j)
            out[r * cols + j] = x[r * cols + j] + row[j];
    }
}

void column_sum_acc(std::span<const double> g, std::span<double> out, std::size_t rows,
                    std::size_t cols) {
    const auto m = static_cast<std::int64_t>(cols);
#pragma omp parallel for schedule(static) if (rows * cols >= parallel_threshold)
    for (std::int64_t jj = 0; jj < m; ++jj) {
        const auto j = static_cast<std::size_t>(jj);
        double acc = 0.0;
        for (std::size_t r = 0; r < rows; ++r)
            acc += g[r * cols + j];
        out[j] += acc;
    }
}

void tanh(std::span<const double> x, std::span<double> out) {
    const auto n = static_cast<std::int64_t>(x.size());
#pragma omp parallel for schedule(static) if (x.size() >= parallel_threshold)
    for (std::int64_t i = 0; i < n; ++i)
        out[static_cast<std::size_t>(i)] = std::tanh(x[static_cast<std::size_t>(i)]);
}

} // namespace ial::kernels
