#include "desyre/regularizers.hpp"

#include <cmath>

namespace desyre {

WeightSpec WeightSpec::dyadic(int levels) {
    WeightSpec w;
    for (int l = 1; l <= levels; ++l) w.level_weights.push_back(std::pow(2.0, -l));
    w.approx_weight = std::pow(2.0, -levels);
    return w;
}

WeightSpec WeightSpec::uniform(int levels) {
    WeightSpec w;
    w.level_weights.assign(static_cast<std::size_t>(levels), 1.0);
    w.approx_weight = 1.0;
    return w;
}

double WeightSpec::floor() const {
    double f = approx_weight;
    for (double w : level_weights) f = std::min(f, w);
    if (!(f > 0.0)) throw std::invalid_argument("WeightSpec: weights must be bounded below by > 0");
    return f;
}

std::vector<double> WeightSpec::flat_weights(const PyramidShape& shape) const {
    if (static_cast<int>(level_weights.size()) != shape.levels)
        throw std::invalid_argument("WeightSpec: level count mismatch");
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(shape.coeff_count()));
    for (int l = 1; l <= shape.levels; ++l) {
        const std::int64_t s = shape.level_side(l);
        const std::int64_t n = 3LL * shape.detail_channels[static_cast<std::size_t>(l - 1)] * s * s;
        flat.insert(flat.end(), static_cast<std::size_t>(n), for_level(l));
    }
    const std::int64_t sa = shape.level_side(shape.levels);
    flat.insert(flat.end(), static_cast<std::size_t>(shape.approx_channels * sa * sa), approx_weight);
    return flat;
}

double weighted_l1(const CoeffPyramid& xi, const WeightSpec& w) {
    if (static_cast<int>(w.level_weights.size()) != xi.shape.levels)
        throw std::invalid_argument("weighted_l1: weight levels do not match pyramid levels");
    double total = 0.0;
    for (int l = 1; l <= xi.shape.levels; ++l) {
        const double wl = w.for_level(l);
        double band_sum = 0.0;
        for (const Tensor& band : xi.detail[static_cast<std::size_t>(l - 1)])
            for (double v : band.data) band_sum += std::abs(v);
        total += wl * band_sum;
    }
    double approx_sum = 0.0;
    for (double v : xi.approx.data) approx_sum += std::abs(v);
    return total + w.approx_weight * approx_sum;
}

namespace {
inline double soft(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}
}  // namespace

CoeffPyramid prox_weighted_l1(const CoeffPyramid& xi, double tau, const WeightSpec& w) {
    if (tau < 0.0) throw std::invalid_argument("prox_weighted_l1: tau must be >= 0");
    CoeffPyramid out = xi;
    for (int l = 1; l <= xi.shape.levels; ++l) {
        const double t = tau * w.for_level(l);
        for (Tensor& band : out.detail[static_cast<std::size_t>(l - 1)])
            for (double& v : band.data) v = soft(v, t);
    }
    const double ta = tau * w.approx_weight;
    for (double& v : out.approx.data) v = soft(v, ta);
    return out;
}

void prox_weighted_l1_flat(std::vector<double>& x, double tau, const std::vector<double>& weights) {
    if (x.size() != weights.size())
        throw std::invalid_argument("prox_weighted_l1_flat: weight vector size mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = soft(x[i], tau * weights[i]);
}

std::pair<double, double> coercivity_bound(const CoeffPyramid& xi, const WeightSpec& w) {
    return {norm2(xi), weighted_l1(xi, w) / w.floor()};
}

GradField grad(const Image& u) {
    GradField g;
    g.height = u.height;
    g.width = u.width;
    g.dx.assign(u.pixels.size(), 0.0);
    g.dy.assign(u.pixels.size(), 0.0);
    for (int y = 0; y < u.height; ++y)
        for (int x = 0; x < u.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * u.width + x;
            if (x + 1 < u.width) g.dx[i] = u.pixels[i + 1] - u.pixels[i];
            if (y + 1 < u.height) g.dy[i] = u.pixels[i + static_cast<std::size_t>(u.width)] - u.pixels[i];
        }
    return g;
}

Image div(const GradField& p) {
    Image out(p.height, p.width);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            const std::size_t i = static_cast<std::size_t>(y) * p.width + x;
            double v = 0.0;
            // adjoint of forward differences with Neumann boundary
            if (x + 1 < p.width) v += p.dx[i];
            if (x > 0) v -= p.dx[i - 1];
            if (y + 1 < p.height) v += p.dy[i];
            if (y > 0) v -= p.dy[i - static_cast<std::size_t>(p.width)];
            out.pixels[i] = v;
        }
    return out;
}

double tv_seminorm(const Image& u) {
    const GradField g = grad(u);
    double s = 0.0;
    for (double v : g.dx) s += std::abs(v);
    for (double v : g.dy) s += std::abs(v);
    return s;
}

}  // namespace desyre
