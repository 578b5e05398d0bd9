#include "desyre/image.hpp"

#include <algorithm>
#include <cmath>

namespace desyre {

double min_pixel(const Image& u) {
    return u.pixels.empty() ? 0.0 : *std::min_element(u.pixels.begin(), u.pixels.end());
}

double max_pixel(const Image& u) {
    return u.pixels.empty() ? 0.0 : *std::max_element(u.pixels.begin(), u.pixels.end());
}

double norm2(const Image& u) {
    double s = 0.0;
    for (double v : u.pixels) s += v * v;
    return std::sqrt(s);
}

}  // namespace desyre
