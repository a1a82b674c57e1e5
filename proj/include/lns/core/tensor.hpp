#pragma once

#include <cstdint>
#include <cstring>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "lns/core/error.hpp"

namespace lns {

/// Dense row-major double tensor with shared storage. Copies are shallow;
/// use clone() for a deep copy. All compute in this project runs in double,
/// storage formats on disk are single precision.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) { reset(std::move(shape)); }

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int64_t> shape, double v) {
        Tensor t(std::move(shape));
        std::fill(t.data(), t.data() + t.size(), v);
        return t;
    }

    static Tensor scalar(double v) { return full({1}, v); }

    static Tensor from(std::vector<int64_t> shape, const std::vector<double>& vals) {
        Tensor t(std::move(shape));
        check(static_cast<int64_t>(vals.size()) == t.size(), ErrorCode::ShapeMismatch,
              "Tensor::from: value count does not match shape");
        std::memcpy(t.data(), vals.data(), sizeof(double) * vals.size());
        return t;
    }

    bool defined() const { return data_ != nullptr; }
    int64_t ndim() const { return static_cast<int64_t>(shape_.size()); }
    int64_t size() const { return size_; }
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t shape(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }

    double* data() { return data_.get(); }
    const double* data() const { return data_.get(); }

    double& operator[](int64_t i) { return data_.get()[i]; }
    double operator[](int64_t i) const { return data_.get()[i]; }

    /// Slow convenience accessor, mainly for tests.
    double& at(std::initializer_list<int64_t> idx) {
        return data_.get()[offset(idx)];
    }
    double at(std::initializer_list<int64_t> idx) const {
        return data_.get()[offset(idx)];
    }

    Tensor clone() const {
        Tensor t(shape_);
        std::memcpy(t.data(), data(), sizeof(double) * static_cast<size_t>(size_));
        return t;
    }

    /// Shares storage; element count must match.
    Tensor reshaped(std::vector<int64_t> shape) const {
        int64_t n = 1;
        for (int64_t s : shape) n *= s;
        check(n == size_, ErrorCode::ShapeMismatch, "reshape: element count mismatch");
        Tensor t;
        t.shape_ = std::move(shape);
        t.size_ = size_;
        t.data_ = data_;
        return t;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void fill(double v) { std::fill(data(), data() + size_, v); }
    void zero() { fill(0.0); }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

private:
    void reset(std::vector<int64_t> shape);

    int64_t offset(std::initializer_list<int64_t> idx) const {
        check(static_cast<int64_t>(idx.size()) == ndim(), ErrorCode::ShapeMismatch,
              "Tensor::at: index rank mismatch");
        int64_t off = 0;
        size_t d = 0;
        for (int64_t i : idx) {
            off = off * shape_[d] + i;
            ++d;
        }
        return off;
    }

    std::vector<int64_t> shape_;
    int64_t size_ = 0;
    std::shared_ptr<double[]> data_;
};

/// Allocation accounting used by the profiler's fallback memory metric.
namespace alloc_stats {
int64_t current_bytes();
int64_t peak_bytes();
void reset_peak();
}

} // namespace lns
