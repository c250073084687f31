#include "milasc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>

#include "milasc/errors.hpp"

namespace milasc {

namespace {

std::size_t checked_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) {
            throw ValidationError("tensor extent must be positive, got " + std::to_string(d));
        }
        n *= d;
        if (n > (std::int64_t{1} << 31)) {
            throw ValidationError("tensor too large for this build");
        }
    }
    return static_cast<std::size_t>(n);
}

} // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {
    init_strides();
}

Tensor::Tensor(std::vector<int> shape, double fill)
    : shape_(std::move(shape)), data_(checked_size(shape_), fill) {
    init_strides();
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values) {
    std::size_t n = checked_size(shape);
    if (values.size() != n) {
        throw ValidationError("tensor data length " + std::to_string(values.size()) +
                              " does not match shape product " + std::to_string(n));
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(values);
    t.init_strides();
    return t;
}

void Tensor::init_strides() {
    strides_.assign(shape_.size(), 1);
    for (int i = rank() - 2; i >= 0; --i) {
        strides_[static_cast<std::size_t>(i)] =
            strides_[static_cast<std::size_t>(i + 1)] * shape_[static_cast<std::size_t>(i + 1)];
    }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor Tensor::reshaped(std::vector<int> shape) const {
    std::size_t n = checked_size(shape);
    if (n != data_.size()) {
        throw ValidationError("reshape of " + shape_str() + " would change element count");
    }
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    t.init_strides();
    return t;
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
        if (i) os << ", ";
        os << shape_[i];
    }
    os << ")";
    return os.str();
}

void require_shape(const Tensor& t, const std::vector<int>& shape, const std::string& what) {
    if (t.shape() != shape) {
        std::ostringstream os;
        os << what << ": expected shape (";
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) os << ", ";
            os << shape[i];
        }
        os << "), got " << t.shape_str();
        throw ValidationError(os.str());
    }
}

} // namespace milasc
