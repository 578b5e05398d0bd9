#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "desyre/image.hpp"

namespace desyre {

/// Parallel-beam geometry: n_theta equidistant angles in [0, pi), n_s
/// equidistant detector offsets spanning [-3/2, 3/2]. The image occupies
/// [-1, 1]^2 regardless of pixel count, so geometry ratios are fixed.
/// The default keeps the measurement count below half the pixel count so
/// the 64x64 problem is genuinely underdetermined.
struct RadonGeometry {
    int n_theta = 60;
    int n_s = 33;
    int side = 64;

    double detector_spacing() const { return 3.0 / (n_s - 1); }
    double detector_offset(int j) const { return -1.5 + j * detector_spacing(); }
    double angle(int i) const;
    double pixel_width() const { return 2.0 / side; }
    void validate() const;
    bool operator==(const RadonGeometry&) const = default;
};

/// n_theta x n_s grid of line integrals, row-major by angle.
struct Sinogram {
    RadonGeometry geom;
    std::vector<double> data;

    Sinogram() = default;
    explicit Sinogram(const RadonGeometry& g)
        : geom(g), data(static_cast<std::size_t>(g.n_theta) * g.n_s, 0.0) {}
    double& at(int itheta, int is) { return data[static_cast<std::size_t>(itheta) * geom.n_s + is]; }
    double at(int itheta, int is) const {
        return data[static_cast<std::size_t>(itheta) * geom.n_s + is];
    }
};

/// Ray-driven line integrals: each ray is sampled with step h = half a
/// pixel width and bilinear interpolation, zero extension outside the
/// image. Linear in u.
Sinogram radon_forward(const Image& u, const RadonGeometry& g);

/// Exact algebraic adjoint of radon_forward (same weights, transposed
/// scatter).
Image radon_adjoint(const Sinogram& v, const RadonGeometry& g);

/// Power iteration on A^T A for a generic operator pair; returns the
/// largest singular value estimate. The Rayleigh-quotient estimate is
/// monotone nondecreasing in the iteration count.
struct PowerIterResult {
    double norm = 0.0;
    int iterations = 0;
    bool converged = false;
};
PowerIterResult operator_norm(
    const std::function<std::vector<double>(const std::vector<double>&)>& apply,
    const std::function<std::vector<double>(const std::vector<double>&)>& adjoint,
    std::int64_t input_dim, int max_iters, double tol = 1e-6, std::uint64_t seed = 1);

/// Largest singular value of the discretized Radon transform.
PowerIterResult op_norm(const RadonGeometry& g, int iters = 100, std::uint64_t seed = 1);

enum class FbpFilter { kRamLak, kHann };
FbpFilter fbp_filter_from_string(const std::string& name);

/// Filtered back-projection: per-angle frequency-domain ramp filtering
/// (windowed per filter choice) followed by back-projection with pi/n_theta
/// angular weight.
Image fbp(const Sinogram& v, const RadonGeometry& g, FbpFilter filter = FbpFilter::kHann);

}  // namespace desyre
