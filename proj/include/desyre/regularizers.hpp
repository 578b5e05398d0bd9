#pragma once

#include <utility>
#include <vector>

#include "desyre/haar.hpp"
#include "desyre/image.hpp"

namespace desyre {

/// Level-indexed coefficient weights. The dyadic rule puts 2^-l on the
/// detail bands produced at downsampling step l and 2^-L on the
/// approximation band, so the floor inf w is 2^-L > 0.
struct WeightSpec {
    std::vector<double> level_weights;  // detail weight per level 1..L
    double approx_weight = 1.0;

    static WeightSpec dyadic(int levels);
    static WeightSpec uniform(int levels);

    double floor() const;
    double for_level(int level) const { return level_weights.at(static_cast<std::size_t>(level - 1)); }

    /// Per-coefficient weights in flatten() order for a given shape.
    std::vector<double> flat_weights(const PyramidShape& shape) const;
};

/// R(xi) = sum_lambda w_lambda |xi_lambda|
double weighted_l1(const CoeffPyramid& xi, const WeightSpec& w);

/// Componentwise soft-thresholding sign(x) * max(|x| - tau*w, 0); the
/// proximal map of tau * R.
CoeffPyramid prox_weighted_l1(const CoeffPyramid& xi, double tau, const WeightSpec& w);
void prox_weighted_l1_flat(std::vector<double>& x, double tau, const std::vector<double>& weights);

/// Returns (||xi||_2, R(xi)/floor(w)). The first is never larger than the
/// second.
std::pair<double, double> coercivity_bound(const CoeffPyramid& xi, const WeightSpec& w);

/// Forward differences in x and y with Neumann boundary (last difference
/// zero).
struct GradField {
    int height = 0, width = 0;
    std::vector<double> dx, dy;
};

GradField grad(const Image& u);

/// Exact negative adjoint of grad: <grad u, p> = -<u, div p>.
Image div(const GradField& p);

/// Anisotropic total variation: sum |du/dx| + |du/dy|.
double tv_seminorm(const Image& u);

}  // namespace desyre
