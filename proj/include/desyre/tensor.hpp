#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace desyre {

/// Dense row-major tensor of 64-bit floats. Shapes are small integer
/// extent lists such as {channels, height, width} or {n}.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != numel_of(shape))
            throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static std::int64_t numel_of(const std::vector<int>& s) {
        std::int64_t n = 1;
        for (int e : s) {
            if (e <= 0) throw std::invalid_argument("Tensor: extents must be positive");
            n *= e;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.data.assign(static_cast<std::size_t>(numel_of(s)), 0.0);
        t.shape = std::move(s);
        return t;
    }

    static Tensor full(std::vector<int> s, double value) {
        Tensor t = zeros(std::move(s));
        std::fill(t.data.begin(), t.data.end(), value);
        return t;
    }

    static Tensor scalar(double value) { return Tensor({1}, {value}); }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    int dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }
    int rank() const { return static_cast<int>(shape.size()); }
};

std::string shape_str(const std::vector<int>& s);
bool all_finite(const Tensor& t);

// Flat-vector helpers shared by the solvers and operators. These are the
// only vector-space operations the iterative methods need.
double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);
double norm2sq(const std::vector<double>& a);
void axpy(double a, const std::vector<double>& x, std::vector<double>& y);  // y += a*x
std::vector<double> scaled(const std::vector<double>& x, double a);
std::vector<double> sub(const std::vector<double>& a, const std::vector<double>& b);
bool all_finite(const std::vector<double>& v);

}  // namespace desyre
