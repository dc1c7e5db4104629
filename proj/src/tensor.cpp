#include "ial/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace ial {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    if (shape.empty())
        throw std::invalid_argument("tensor shape must have at least one dimension");
    for (auto d : shape)
        if (d == 0)
            throw std::invalid_argument("tensor dimensions must be positive");
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           std::multiplies<>());
}

} // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size())
        throw std::invalid_argument("tensor data length " + std::to_string(data_.size()) +
                                    " does not match shape " + shape_string());
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<double> values) {
    return Tensor({rows, cols}, std::vector<double>(values));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::rows() const {
    if (shape_.size() == 1)
        return 1;
    if (shape_.size() == 2)
        return shape_[0];
    throw std::logic_error("matrix view requires rank 1 or 2, got " + shape_string());
}

std::size_t Tensor::cols() const {
    if (shape_.size() == 1)
        return shape_[0];
    if (shape_.size() == 2)
        return shape_[1];
    throw std::logic_error("matrix view requires rank 1 or 2, got " + shape_string());
}

double Tensor::item() const {
    if (data_.size() != 1)
        throw std::logic_error("item() on non-scalar tensor " + shape_string());
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double v : data_)
        if (!std::isfinite(v))
            return false;
    return true;
}

Tensor& Tensor::operator+=(const Tensor& other) {
    if (!same_shape(other))
        throw std::invalid_argument("shape mismatch in +=: " + shape_string() + " vs " +
                                    other.shape_string());
    for (std::size_t i = 0; i < data_.size(); ++i)
        data_[i] += other.data_[i];
    return *this;
}

Tensor& Tensor::operator*=(double s) {
    for (double& v : data_)
        v *= s;
    return *this;
}

std::string Tensor::shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i)
            s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

Tensor operator+(Tensor a, const Tensor& b) {
    a += b;
    return a;
}

Tensor operator*(double s, Tensor a) {
    a *= s;
    return a;
}

double dot(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: size mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        acc += a[i] * b[i];
    return acc;
}

double l2_norm(const Tensor& t) { return std::sqrt(dot(t, t)); }

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.values())
        m = std::max(m, std::abs(v));
    return m;
}

} // namespace ial
