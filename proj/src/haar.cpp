#include "desyre/haar.hpp"

#include <cmath>

namespace desyre {

std::int64_t PyramidShape::coeff_count() const {
    std::int64_t n = 0;
    for (int l = 1; l <= levels; ++l) {
        const std::int64_t s = level_side(l);
        n += 3LL * detail_channels[static_cast<std::size_t>(l - 1)] * s * s;
    }
    const std::int64_t sa = level_side(levels);
    n += static_cast<std::int64_t>(approx_channels) * sa * sa;
    return n;
}

PyramidShape PyramidShape::plain(int image_side, int levels) {
    PyramidShape s;
    s.levels = levels;
    s.image_side = image_side;
    s.detail_channels.assign(static_cast<std::size_t>(levels), 1);
    s.approx_channels = 1;
    s.validate();
    return s;
}

void PyramidShape::validate() const {
    if (levels < 1) throw std::invalid_argument("PyramidShape: levels must be >= 1");
    if (static_cast<int>(detail_channels.size()) != levels)
        throw std::invalid_argument("PyramidShape: detail_channels size must equal levels");
    if (image_side % (1 << levels) != 0)
        throw std::invalid_argument("PyramidShape: image side " + std::to_string(image_side) +
                                    " not divisible by 2^" + std::to_string(levels));
}

CoeffPyramid CoeffPyramid::zeros(const PyramidShape& shape) {
    shape.validate();
    CoeffPyramid p;
    p.shape = shape;
    p.detail.resize(static_cast<std::size_t>(shape.levels));
    for (int l = 1; l <= shape.levels; ++l) {
        const int s = shape.level_side(l);
        const int c = shape.detail_channels[static_cast<std::size_t>(l - 1)];
        for (int b = 0; b < 3; ++b)
            p.detail[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(b)] =
                Tensor::zeros({c, s, s});
    }
    const int sa = shape.level_side(shape.levels);
    p.approx = Tensor::zeros({shape.approx_channels, sa, sa});
    return p;
}

void CoeffPyramid::check_consistent() const {
    shape.validate();
    if (static_cast<int>(detail.size()) != shape.levels)
        throw std::invalid_argument("CoeffPyramid: level count mismatch");
    for (int l = 1; l <= shape.levels; ++l) {
        const int s = shape.level_side(l);
        const int c = shape.detail_channels[static_cast<std::size_t>(l - 1)];
        for (int b = 0; b < 3; ++b) {
            const Tensor& t = detail[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(b)];
            if (t.shape != std::vector<int>{c, s, s})
                throw std::invalid_argument("CoeffPyramid: band shape mismatch at level " +
                                            std::to_string(l) + ": " + shape_str(t.shape));
        }
    }
    const int sa = shape.level_side(shape.levels);
    if (approx.shape != std::vector<int>{shape.approx_channels, sa, sa})
        throw std::invalid_argument("CoeffPyramid: approximation band shape mismatch: " +
                                    shape_str(approx.shape));
}

std::vector<double> CoeffPyramid::flatten() const {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(shape.coeff_count()));
    for (const auto& level : detail)
        for (const auto& band : level) flat.insert(flat.end(), band.data.begin(), band.data.end());
    flat.insert(flat.end(), approx.data.begin(), approx.data.end());
    return flat;
}

CoeffPyramid CoeffPyramid::unflatten(const PyramidShape& shape, const std::vector<double>& flat) {
    if (static_cast<std::int64_t>(flat.size()) != shape.coeff_count())
        throw std::invalid_argument("CoeffPyramid::unflatten: expected " +
                                    std::to_string(shape.coeff_count()) + " values, got " +
                                    std::to_string(flat.size()));
    CoeffPyramid p = zeros(shape);
    std::size_t off = 0;
    for (auto& level : p.detail)
        for (auto& band : level) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
                      flat.begin() + static_cast<std::ptrdiff_t>(off + band.data.size()),
                      band.data.begin());
            off += band.data.size();
        }
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off), flat.end(), p.approx.data.begin());
    return p;
}

double norm2(const CoeffPyramid& p) {
    double s = 0.0;
    for (const auto& level : p.detail)
        for (const auto& band : level)
            for (double v : band.data) s += v * v;
    for (double v : p.approx.data) s += v * v;
    return std::sqrt(s);
}

namespace {

// One analysis step of the 2x2 orthonormal bank on a single-channel plane.
void haar_step(const std::vector<double>& in, int side, std::vector<double>& ll,
               std::vector<double>& hl, std::vector<double>& lh, std::vector<double>& hh) {
    const int half = side / 2;
    ll.assign(static_cast<std::size_t>(half) * half, 0.0);
    hl.assign(static_cast<std::size_t>(half) * half, 0.0);
    lh.assign(static_cast<std::size_t>(half) * half, 0.0);
    hh.assign(static_cast<std::size_t>(half) * half, 0.0);
    for (int i = 0; i < half; ++i)
        for (int j = 0; j < half; ++j) {
            const double a = in[static_cast<std::size_t>(2 * i) * side + 2 * j];
            const double b = in[static_cast<std::size_t>(2 * i) * side + 2 * j + 1];
            const double c = in[static_cast<std::size_t>(2 * i + 1) * side + 2 * j];
            const double d = in[static_cast<std::size_t>(2 * i + 1) * side + 2 * j + 1];
            const std::size_t o = static_cast<std::size_t>(i) * half + j;
            ll[o] = 0.5 * (a + b + c + d);
            hl[o] = 0.5 * (a - b + c - d);
            lh[o] = 0.5 * (a + b - c - d);
            hh[o] = 0.5 * (a - b - c + d);
        }
}

void haar_step_inverse(const std::vector<double>& ll, const std::vector<double>& hl,
                       const std::vector<double>& lh, const std::vector<double>& hh, int half,
                       std::vector<double>& out) {
    const int side = 2 * half;
    out.assign(static_cast<std::size_t>(side) * side, 0.0);
    for (int i = 0; i < half; ++i)
        for (int j = 0; j < half; ++j) {
            const std::size_t o = static_cast<std::size_t>(i) * half + j;
            const double s = ll[o], x = hl[o], y = lh[o], z = hh[o];
            out[static_cast<std::size_t>(2 * i) * side + 2 * j] = 0.5 * (s + x + y + z);
            out[static_cast<std::size_t>(2 * i) * side + 2 * j + 1] = 0.5 * (s - x + y - z);
            out[static_cast<std::size_t>(2 * i + 1) * side + 2 * j] = 0.5 * (s + x - y - z);
            out[static_cast<std::size_t>(2 * i + 1) * side + 2 * j + 1] = 0.5 * (s - x - y + z);
        }
}

}  // namespace

CoeffPyramid haar_analysis(const Image& u, int levels) {
    if (u.height != u.width)
        throw std::invalid_argument("haar_analysis: image must be square, got " +
                                    std::to_string(u.height) + "x" + std::to_string(u.width));
    if (levels < 1 || u.width % (1 << levels) != 0)
        throw std::invalid_argument("haar_analysis: side " + std::to_string(u.width) +
                                    " not divisible by 2^" + std::to_string(levels));
    CoeffPyramid p = CoeffPyramid::zeros(PyramidShape::plain(u.width, levels));
    std::vector<double> low = u.pixels;
    int side = u.width;
    std::vector<double> ll, hl, lh, hh;
    for (int l = 1; l <= levels; ++l) {
        haar_step(low, side, ll, hl, lh, hh);
        auto& bands = p.detail[static_cast<std::size_t>(l - 1)];
        bands[0].data = hl;
        bands[1].data = lh;
        bands[2].data = hh;
        low = ll;
        side /= 2;
    }
    p.approx.data = low;
    return p;
}

Image haar_synthesis(const CoeffPyramid& coeffs) {
    coeffs.check_consistent();
    if (coeffs.shape.approx_channels != 1)
        throw std::invalid_argument("haar_synthesis: expects single-channel bands");
    for (int c : coeffs.shape.detail_channels)
        if (c != 1) throw std::invalid_argument("haar_synthesis: expects single-channel bands");
    std::vector<double> low = coeffs.approx.data;
    int half = coeffs.shape.level_side(coeffs.shape.levels);
    std::vector<double> out;
    for (int l = coeffs.shape.levels; l >= 1; --l) {
        const auto& bands = coeffs.detail[static_cast<std::size_t>(l - 1)];
        haar_step_inverse(low, bands[0].data, bands[1].data, bands[2].data, half, out);
        low = out;
        half *= 2;
    }
    return Image(coeffs.shape.image_side, coeffs.shape.image_side, std::move(low));
}

}  // namespace desyre
