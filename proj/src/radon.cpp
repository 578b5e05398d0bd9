#include "desyre/radon.hpp"

#include <cmath>
#include <complex>

#include "desyre/parallel.hpp"
#include "desyre/rng.hpp"

namespace desyre {

namespace {
const double kPi = 3.14159265358979323846264338327950288;

// sqrt(2) covers the half-diagonal of [-1,1]^2; rays are clipped by zero
// extension instead of exact intersection.
const double kHalfChord = 1.41421356237309504880168872420970;

struct RaySample {
    // bilinear footprint: base pixel (y0, x0) and fractional offsets
    int y0, x0;
    double fy, fx;
    bool inside;
};

inline RaySample locate(double px, double py, int side, double pixel_width) {
    // pixel centers at -1 + (i + 0.5) * pixel_width
    RaySample s;
    const double gx = (px + 1.0) / pixel_width - 0.5;
    const double gy = (py + 1.0) / pixel_width - 0.5;
    const double fx0 = std::floor(gx);
    const double fy0 = std::floor(gy);
    s.x0 = static_cast<int>(fx0);
    s.y0 = static_cast<int>(fy0);
    s.fx = gx - fx0;
    s.fy = gy - fy0;
    s.inside = s.x0 >= -1 && s.x0 < side && s.y0 >= -1 && s.y0 < side;
    return s;
}

}  // namespace

double RadonGeometry::angle(int i) const { return kPi * i / n_theta; }

void RadonGeometry::validate() const {
    if (n_theta < 1) throw std::invalid_argument("RadonGeometry: n_theta must be >= 1");
    if (n_s < 2) throw std::invalid_argument("RadonGeometry: n_s must be >= 2");
    if (side < 2) throw std::invalid_argument("RadonGeometry: side must be >= 2");
}

Sinogram radon_forward(const Image& u, const RadonGeometry& g) {
    g.validate();
    if (u.height != g.side || u.width != g.side)
        throw std::invalid_argument("radon_forward: image " + std::to_string(u.height) + "x" +
                                    std::to_string(u.width) + " does not match geometry side " +
                                    std::to_string(g.side));
    Sinogram sino(g);
    const double h = g.pixel_width() / 2.0;
    const int n_steps = static_cast<int>(std::ceil(2.0 * kHalfChord / h));
    const int side = g.side;
    const double pw = g.pixel_width();
    parallel_for(g.n_theta, [&](std::int64_t it) {
        const double ct = std::cos(g.angle(static_cast<int>(it)));
        const double st = std::sin(g.angle(static_cast<int>(it)));
        for (int is = 0; is < g.n_s; ++is) {
            const double s = g.detector_offset(is);
            double acc = 0.0;
            for (int k = 0; k < n_steps; ++k) {
                const double t = -kHalfChord + (k + 0.5) * h;
                const RaySample smp = locate(s * ct - t * st, s * st + t * ct, side, pw);
                if (!smp.inside) continue;
                const double w00 = (1.0 - smp.fy) * (1.0 - smp.fx);
                const double w01 = (1.0 - smp.fy) * smp.fx;
                const double w10 = smp.fy * (1.0 - smp.fx);
                const double w11 = smp.fy * smp.fx;
                const int x0 = smp.x0, y0 = smp.y0;
                double v = 0.0;
                if (y0 >= 0) {
                    if (x0 >= 0) v += w00 * u.at(y0, x0);
                    if (x0 + 1 < side) v += w01 * u.at(y0, x0 + 1);
                }
                if (y0 + 1 < side) {
                    if (x0 >= 0) v += w10 * u.at(y0 + 1, x0);
                    if (x0 + 1 < side) v += w11 * u.at(y0 + 1, x0 + 1);
                }
                acc += v;
            }
            sino.at(static_cast<int>(it), is) = acc * h;
        }
    });
    return sino;
}

Image radon_adjoint(const Sinogram& v, const RadonGeometry& g) {
    g.validate();
    if (v.geom != g)
        throw std::invalid_argument("radon_adjoint: sinogram geometry does not match");
    const double h = g.pixel_width() / 2.0;
    const int n_steps = static_cast<int>(std::ceil(2.0 * kHalfChord / h));
    const int side = g.side;
    const double pw = g.pixel_width();
    // Scatter per angle into per-worker accumulators, reduced in fixed
    // order afterwards.
    const int workers = std::max(1, std::min(threads::count(), g.n_theta));
    std::vector<Image> partial(static_cast<std::size_t>(workers), Image(side, side));
    const int chunk = (g.n_theta + workers - 1) / workers;
    parallel_for(workers, [&](std::int64_t w) {
        Image& out = partial[static_cast<std::size_t>(w)];
        const int lo = static_cast<int>(w) * chunk;
        const int hi = std::min(g.n_theta, lo + chunk);
        for (int it = lo; it < hi; ++it) {
            const double ct = std::cos(g.angle(it));
            const double st = std::sin(g.angle(it));
            for (int is = 0; is < g.n_s; ++is) {
                const double val = v.at(it, is) * h;
                if (val == 0.0) continue;
                const double s = g.detector_offset(is);
                for (int k = 0; k < n_steps; ++k) {
                    const double t = -kHalfChord + (k + 0.5) * h;
                    const RaySample smp = locate(s * ct - t * st, s * st + t * ct, side, pw);
                    if (!smp.inside) continue;
                    const int x0 = smp.x0, y0 = smp.y0;
                    if (y0 >= 0) {
                        if (x0 >= 0) out.at(y0, x0) += (1.0 - smp.fy) * (1.0 - smp.fx) * val;
                        if (x0 + 1 < side) out.at(y0, x0 + 1) += (1.0 - smp.fy) * smp.fx * val;
                    }
                    if (y0 + 1 < side) {
                        if (x0 >= 0) out.at(y0 + 1, x0) += smp.fy * (1.0 - smp.fx) * val;
                        if (x0 + 1 < side) out.at(y0 + 1, x0 + 1) += smp.fy * smp.fx * val;
                    }
                }
            }
        }
    });
    Image out(side, side);
    for (const Image& p : partial)
        for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] += p.pixels[i];
    return out;
}

PowerIterResult operator_norm(
    const std::function<std::vector<double>(const std::vector<double>&)>& apply,
    const std::function<std::vector<double>(const std::vector<double>&)>& adjoint,
    std::int64_t input_dim, int max_iters, double tol, std::uint64_t seed) {
    if (max_iters < 1) throw std::invalid_argument("operator_norm: needs at least one iteration");
    Rng rng(seed);
    std::vector<double> x(static_cast<std::size_t>(input_dim));
    for (double& v : x) v = rng.gaussian();
    double nx = norm2(x);
    for (double& v : x) v /= nx;
    PowerIterResult res;
    double prev = 0.0;
    for (int k = 0; k < max_iters; ++k) {
        std::vector<double> ax = apply(x);
        const double est = norm2(ax);  // Rayleigh quotient sqrt(x^T A^T A x)
        std::vector<double> y = adjoint(ax);
        const double ny = norm2(y);
        res.norm = est;
        res.iterations = k + 1;
        if (k > 0 && std::abs(est - prev) <= tol * std::max(est, 1e-300)) {
            res.converged = true;
            break;
        }
        prev = est;
        if (ny == 0.0) {  // x in the null space; estimate is exact
            res.converged = true;
            break;
        }
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = y[i] / ny;
    }
    return res;
}

PowerIterResult op_norm(const RadonGeometry& g, int iters, std::uint64_t seed) {
    if (iters < 10) throw std::invalid_argument("op_norm: iters must be >= 10");
    auto apply = [&g](const std::vector<double>& x) {
        return radon_forward(Image(g.side, g.side, x), g).data;
    };
    auto adjoint = [&g](const std::vector<double>& y) {
        Sinogram s(g);
        s.data = y;
        return radon_adjoint(s, g).pixels;
    };
    return operator_norm(apply, adjoint, static_cast<std::int64_t>(g.side) * g.side, iters, 1e-6,
                         seed);
}

FbpFilter fbp_filter_from_string(const std::string& name) {
    if (name == "ram-lak" || name == "ramlak" || name == "ramp") return FbpFilter::kRamLak;
    if (name == "hann") return FbpFilter::kHann;
    throw std::invalid_argument("fbp: unknown filter '" + name + "' (expected ram-lak or hann)");
}

namespace {

// Iterative radix-2 complex FFT, power-of-two length.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse) {
    const std::size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0) throw std::invalid_argument("fft: length must be a power of 2");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
    if (inverse)
        for (auto& v : a) v /= static_cast<double>(n);
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

}  // namespace

Image fbp(const Sinogram& v, const RadonGeometry& g, FbpFilter filter) {
    g.validate();
    if (g.n_s < 8) throw std::invalid_argument("fbp: needs n_s >= 8");
    if (v.geom != g) throw std::invalid_argument("fbp: sinogram geometry does not match");

    const std::size_t n_fft = next_pow2(2 * static_cast<std::size_t>(g.n_s));
    const double ds = g.detector_spacing();

    // Frequency response |f| (cycles per unit length), windowed.
    std::vector<double> response(n_fft);
    const double f_max = 1.0 / (2.0 * ds);
    for (std::size_t k = 0; k < n_fft; ++k) {
        const std::size_t k_sym = k <= n_fft / 2 ? k : n_fft - k;
        const double f = static_cast<double>(k_sym) / (static_cast<double>(n_fft) * ds);
        double w = 1.0;
        if (filter == FbpFilter::kHann) w = 0.5 * (1.0 + std::cos(kPi * f / f_max));
        response[k] = f * w;
    }

    // Filter every angular profile in the frequency domain.
    std::vector<std::vector<double>> filtered(static_cast<std::size_t>(g.n_theta));
    parallel_for(g.n_theta, [&](std::int64_t it) {
        std::vector<std::complex<double>> row(n_fft, {0.0, 0.0});
        for (int is = 0; is < g.n_s; ++is) row[static_cast<std::size_t>(is)] = v.at(static_cast<int>(it), is);
        fft_inplace(row, false);
        for (std::size_t k = 0; k < n_fft; ++k) row[k] *= response[k];
        fft_inplace(row, true);
        auto& out = filtered[static_cast<std::size_t>(it)];
        out.resize(static_cast<std::size_t>(g.n_s));
        for (int is = 0; is < g.n_s; ++is) out[static_cast<std::size_t>(is)] = row[static_cast<std::size_t>(is)].real();
    });

    // Back-project with angular weight pi / n_theta and linear detector
    // interpolation.
    Image out(g.side, g.side);
    const double dtheta = kPi / g.n_theta;
    const double pw = g.pixel_width();
    parallel_for(g.side, [&](std::int64_t iy) {
        const double y = -1.0 + (static_cast<double>(iy) + 0.5) * pw;
        for (int ix = 0; ix < g.side; ++ix) {
            const double x = -1.0 + (ix + 0.5) * pw;
            double acc = 0.0;
            for (int it = 0; it < g.n_theta; ++it) {
                const double s = x * std::cos(g.angle(it)) + y * std::sin(g.angle(it));
                const double pos = (s + 1.5) / ds;
                const int j0 = static_cast<int>(std::floor(pos));
                if (j0 < -1 || j0 >= g.n_s) continue;
                const double f = pos - j0;
                double val = 0.0;
                if (j0 >= 0) val += (1.0 - f) * filtered[static_cast<std::size_t>(it)][static_cast<std::size_t>(j0)];
                if (j0 + 1 < g.n_s) val += f * filtered[static_cast<std::size_t>(it)][static_cast<std::size_t>(j0 + 1)];
                acc += val;
            }
            out.at(static_cast<int>(iy), ix) = acc * dtheta;
        }
    });
    return out;
}

}  // namespace desyre
