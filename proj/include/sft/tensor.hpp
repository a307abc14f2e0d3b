#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sft/error.hpp"

namespace sft {

// Numeric mode for a whole run. f32 quantizes every tensor element through
// float after each write, so experiments behave like 32-bit storage while
// oracle and finite-difference work can run in full double precision.
enum class Precision { f32, f64 };

Precision precision();
void set_precision(Precision p);

inline double quantize(double x, Precision p) {
    return p == Precision::f32 ? static_cast<double>(static_cast<float>(x)) : x;
}
inline double quantize(double x) { return quantize(x, precision()); }

struct PrecisionGuard {
    explicit PrecisionGuard(Precision p) : saved_(precision()) { set_precision(p); }
    ~PrecisionGuard() { set_precision(saved_); }
    PrecisionGuard(const PrecisionGuard&) = delete;
    PrecisionGuard& operator=(const PrecisionGuard&) = delete;

private:
    Precision saved_;
};

// Dense row-major tensor. No implicit broadcasting; shape arithmetic is
// always explicit at the op level.
struct Tensor {
    std::vector<int64_t> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;

    static Tensor zeros(std::vector<int64_t> shape);
    static Tensor full(std::vector<int64_t> shape, double value);
    static Tensor scalar(double value);
    // Takes ownership of vals; quantizes under the current precision mode.
    static Tensor from(std::vector<int64_t> shape, std::vector<double> vals);

    int64_t numel() const;
    int ndim() const { return static_cast<int>(shape.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }

    // 2-D accessors (rows x cols).
    int64_t rows() const { return shape[0]; }
    int64_t cols() const { return shape.size() > 1 ? shape[1] : 1; }
    double at2(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }
    double& at2(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    std::string shape_str() const;
};

std::string shape_str(const std::vector<int64_t>& shape);

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

}  // namespace sft
