#include "sft/tensor.hpp"

#include <cmath>

namespace sft {

namespace {
Precision g_precision = Precision::f32;
}

Precision precision() { return g_precision; }
void set_precision(Precision p) { g_precision = p; }

Tensor Tensor::zeros(std::vector<int64_t> shape) {
    Tensor t;
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + sft::shape_str(shape));
        n *= d;
    }
    t.shape = std::move(shape);
    t.data.assign(static_cast<size_t>(n), 0.0);
    return t;
}

Tensor Tensor::full(std::vector<int64_t> shape, double value) {
    Tensor t = zeros(std::move(shape));
    double v = quantize(value);
    for (double& x : t.data) x = v;
    return t;
}

Tensor Tensor::scalar(double value) { return full({1}, value); }

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> vals) {
    Tensor t = zeros(std::move(shape));
    if (t.data.size() != vals.size())
        throw ShapeError("tensor init: " + sft::shape_str(t.shape) + " needs " +
                         std::to_string(t.data.size()) + " values, got " +
                         std::to_string(vals.size()));
    for (size_t i = 0; i < vals.size(); ++i) t.data[i] = quantize(vals[i]);
    return t;
}

int64_t Tensor::numel() const { return static_cast<int64_t>(data.size()); }

bool Tensor::all_finite() const {
    for (double x : data)
        if (!std::isfinite(x)) return false;
    return true;
}

std::string Tensor::shape_str() const { return sft::shape_str(shape); }

std::string shape_str(const std::vector<int64_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace sft
