#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace advnf {

// Invalid arguments / contract violations (CLI maps these to exit code 1).
struct ValueError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Numeric failures at runtime: domain errors, non-finite values, divergence
// (CLI maps these to exit code 2).
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Dense row-major tensor of doubles. Rank 0 is a scalar (one element).
class Tensor {
  public:
    Tensor() : shape_{}, data_(1, 0.0) {}

    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(numel_of(shape_), fill) {}

    static Tensor scalar(double v) {
        Tensor t;
        t.data_[0] = v;
        return t;
    }

    static Tensor row(std::vector<double> v) {
        Tensor t;
        t.shape_ = {v.size()};
        t.data_ = std::move(v);
        return t;
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        if (v.size() != rows * cols)
            throw ValueError("Tensor::matrix: data size does not match rows*cols");
        Tensor t;
        t.shape_ = {rows, cols};
        t.data_ = std::move(v);
        return t;
    }

    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool is_scalar() const { return shape_.empty(); }

    std::size_t dim(std::size_t axis) const {
        if (axis >= shape_.size()) throw ValueError("Tensor::dim: axis out of range");
        return shape_[axis];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // 2-D access
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (double v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    std::string shape_str() const {
        std::ostringstream os;
        os << "(";
        for (std::size_t i = 0; i < shape_.size(); ++i)
            os << (i ? "," : "") << shape_[i];
        os << ")";
        return os.str();
    }

  private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

namespace detail {

// Right-aligned broadcast of two shapes; throws if incompatible.
inline std::vector<std::size_t> broadcast_shape(const std::vector<std::size_t>& a,
                                                const std::vector<std::size_t>& b) {
    const std::size_t ra = a.size(), rb = b.size();
    const std::size_t r = std::max(ra, rb);
    std::vector<std::size_t> out(r);
    for (std::size_t i = 0; i < r; ++i) {
        const std::size_t da = i < r - ra ? 1 : a[i - (r - ra)];
        const std::size_t db = i < r - rb ? 1 : b[i - (r - rb)];
        if (da != db && da != 1 && db != 1)
            throw ValueError("broadcast: incompatible shapes");
        out[i] = std::max(da, db);
    }
    return out;
}

// Maps a flat index in the broadcast result to a flat index in an operand of
// shape `s` (right-aligned, size-1 axes repeat).
inline std::size_t broadcast_index(std::size_t flat,
                                   const std::vector<std::size_t>& out_shape,
                                   const std::vector<std::size_t>& s) {
    if (s == out_shape) return flat;
    const std::size_t r = out_shape.size(), rs = s.size();
    std::size_t idx = 0, stride = 1;
    // walk axes from last to first
    for (std::size_t k = 0; k < r; ++k) {
        const std::size_t ax = r - 1 - k;
        const std::size_t coord = flat % out_shape[ax];
        flat /= out_shape[ax];
        if (k < rs) {
            const std::size_t d = s[rs - 1 - k];
            if (d != 1) idx += (coord % d) * stride;
            stride *= d;
        }
    }
    return idx;
}

}  // namespace detail

}  // namespace advnf
