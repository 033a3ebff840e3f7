#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

namespace fatlab {

// Dense float32 tensor, row-major, contiguous. All shape arithmetic is
// int64 to keep index math safe on large flat buffers.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape) { reshape_alloc(std::move(shape)); }
    Tensor(std::initializer_list<int64_t> shape)
        : Tensor(std::vector<int64_t>(shape)) {}

    void reshape_alloc(std::vector<int64_t> shape) {
        shape_ = std::move(shape);
        int64_t n = 1;
        for (int64_t d : shape_) n *= d;
        data_.assign(static_cast<size_t>(n), 0.0f);
    }

    // Reinterpret without touching storage; element count must match.
    void reshape_view(std::vector<int64_t> shape) {
        int64_t n = 1;
        for (int64_t d : shape) n *= d;
        assert(n == numel());
        shape_ = std::move(shape);
    }

    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    const std::vector<int64_t>& shape() const { return shape_; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }
    void zero() { fill(0.0f); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

private:
    std::vector<int64_t> shape_;
    std::vector<float> data_;
};

// Reductions accumulate in double: float32 sums over 1e5+ elements lose
// digits that the finite-difference oracles in the tests would notice.
inline double dsum(const float* a, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += a[i];
    return s;
}

inline double ddot(const float* a, const float* b, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * b[i];
    return s;
}

inline double dsum_abs(const float* a, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += std::abs(static_cast<double>(a[i]));
    return s;
}

inline double dsum_sq(const float* a, int64_t n) {
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += static_cast<double>(a[i]) * a[i];
    return s;
}

inline float sign0(float x) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); }

inline float clampf(float x, float lo, float hi) {
    return x < lo ? lo : (x > hi ? hi : x);
}

}  // namespace fatlab
