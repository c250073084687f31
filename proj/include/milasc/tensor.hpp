#pragma once

#include <string>
#include <vector>

namespace milasc {

/// Dense row-major N-dimensional array of 64-bit floats. Carries every
/// activation, parameter and gradient in the library.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);           // zero-filled
    Tensor(std::vector<int> shape, double fill);
    static Tensor from(std::vector<int> shape, std::vector<double> values);

    const std::vector<int>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    int size() const { return static_cast<int>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double& operator[](int i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(int i0) { return data_[static_cast<std::size_t>(i0)]; }
    double& at(int i0, int i1) { return data_[static_cast<std::size_t>(i0 * strides_[0] + i1)]; }
    double& at(int i0, int i1, int i2) {
        return data_[static_cast<std::size_t>(i0 * strides_[0] + i1 * strides_[1] + i2)];
    }
    double& at(int i0, int i1, int i2, int i3) {
        return data_[static_cast<std::size_t>(i0 * strides_[0] + i1 * strides_[1] + i2 * strides_[2] + i3)];
    }
    double at(int i0) const { return data_[static_cast<std::size_t>(i0)]; }
    double at(int i0, int i1) const { return data_[static_cast<std::size_t>(i0 * strides_[0] + i1)]; }
    double at(int i0, int i1, int i2) const {
        return data_[static_cast<std::size_t>(i0 * strides_[0] + i1 * strides_[1] + i2)];
    }
    double at(int i0, int i1, int i2, int i3) const {
        return data_[static_cast<std::size_t>(i0 * strides_[0] + i1 * strides_[1] + i2 * strides_[2] + i3)];
    }

    /// Row-major stride of dimension i (stride of the last dimension is 1).
    int stride(int i) const {
        return i + 1 == rank() ? 1 : strides_[static_cast<std::size_t>(i)];
    }

    void fill(double v);
    bool all_finite() const;
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Reinterprets the buffer under a new shape with the same element count.
    Tensor reshaped(std::vector<int> shape) const;

    std::string shape_str() const; // e.g. "(2, 3, 8, 8)"

private:
    void init_strides();

    std::vector<int> shape_;
    std::vector<int> strides_; // strides_[i] = stride of dim i; last entry omitted conceptually (==1)
    std::vector<double> data_;
};

/// Throws ValidationError naming `what` when shapes differ.
void require_shape(const Tensor& t, const std::vector<int>& shape, const std::string& what);

} // namespace milasc
