#pragma once

#include <vector>

#include "desyre/tensor.hpp"

namespace desyre {

/// Real-valued H x W pixel grid, row-major.
struct Image {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0.0) {}
    Image(int h, int w, std::vector<double> p) : height(h), width(w), pixels(std::move(p)) {}

    double& at(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(pixels.size()); }

    Tensor to_tensor() const { return Tensor({1, height, width}, pixels); }
    static Image from_tensor(const Tensor& t) {
        if (t.rank() == 2) return Image(t.dim(0), t.dim(1), t.data);
        if (t.rank() == 3 && t.dim(0) == 1) return Image(t.dim(1), t.dim(2), t.data);
        throw std::invalid_argument("Image::from_tensor: expected [H,W] or [1,H,W], got " +
                                    shape_str(t.shape));
    }
};

double min_pixel(const Image& u);
double max_pixel(const Image& u);
double norm2(const Image& u);

}  // namespace desyre
