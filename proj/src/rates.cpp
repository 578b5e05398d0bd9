#include "desyre/rates.hpp"

#include <cmath>
#include <sstream>

#include "desyre/io.hpp"
#include "desyre/radon.hpp"
#include "desyre/rng.hpp"
#include "desyre/solvers.hpp"

namespace desyre {

std::vector<double> DenseMatrix::apply(const std::vector<double>& x) const {
    std::vector<double> y(static_cast<std::size_t>(rows), 0.0);
    for (int i = 0; i < rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < cols; ++j) s += at(i, j) * x[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = s;
    }
    return y;
}

std::vector<double> DenseMatrix::apply_t(const std::vector<double>& y) const {
    std::vector<double> x(static_cast<std::size_t>(cols), 0.0);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
            x[static_cast<std::size_t>(j)] += at(i, j) * y[static_cast<std::size_t>(i)];
    return x;
}

double ParamRule::alpha(double delta) const {
    if (!(delta >= 0.0)) throw std::invalid_argument("ParamRule: delta must be >= 0");
    return c * std::pow(delta, p);
}

ParamRule parse_param_rule(const std::string& text) {
    ParamRule rule;
    rule.tag = text;
    std::string body = text;
    if (body.rfind("alpha=", 0) == 0) body = body.substr(6);
    if (body == "delta") {
        rule.p = 1.0;
        return rule;
    }
    if (body == "delta^2" || body == "delta_sq") {
        rule.p = 2.0;
        return rule;
    }
    if (body == "sqrt(delta)" || body == "sqrt_delta") {
        rule.p = 0.5;
        return rule;
    }
    // general form: [c*]delta^p
    double c = 1.0;
    std::string rest = body;
    if (const auto star = body.find('*'); star != std::string::npos) {
        c = std::stod(body.substr(0, star));
        rest = body.substr(star + 1);
    }
    if (rest.rfind("delta", 0) != 0)
        throw std::invalid_argument("cannot parse parameter rule '" + text + "'");
    double p = 1.0;
    if (const auto caret = rest.find('^'); caret != std::string::npos)
        p = std::stod(rest.substr(caret + 1));
    rule.c = c;
    rule.p = p;
    return rule;
}

namespace {

// Least squares on the column subset S via normal equations with partial
// pivoting; returns false when A_S is (numerically) rank deficient.
bool solve_support(const DenseMatrix& A, const std::vector<int>& support,
                   const std::vector<double>& v, std::vector<double>& coeffs) {
    const int k = static_cast<int>(support.size());
    std::vector<double> g(static_cast<std::size_t>(k) * k, 0.0);  // A_S^T A_S
    std::vector<double> rhs(static_cast<std::size_t>(k), 0.0);
    for (int p = 0; p < k; ++p) {
        for (int q = 0; q < k; ++q) {
            double s = 0.0;
            for (int i = 0; i < A.rows; ++i) s += A.at(i, support[static_cast<std::size_t>(p)]) *
                                                  A.at(i, support[static_cast<std::size_t>(q)]);
            g[static_cast<std::size_t>(p) * k + q] = s;
        }
        double s = 0.0;
        for (int i = 0; i < A.rows; ++i)
            s += A.at(i, support[static_cast<std::size_t>(p)]) * v[static_cast<std::size_t>(i)];
        rhs[static_cast<std::size_t>(p)] = s;
    }
    double scale = 0.0;
    for (double x : g) scale = std::max(scale, std::abs(x));
    if (scale == 0.0) return false;
    // LU with partial pivoting
    std::vector<int> piv(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) piv[static_cast<std::size_t>(i)] = i;
    for (int col = 0; col < k; ++col) {
        int best = col;
        for (int r = col + 1; r < k; ++r)
            if (std::abs(g[static_cast<std::size_t>(r) * k + col]) >
                std::abs(g[static_cast<std::size_t>(best) * k + col]))
                best = r;
        if (std::abs(g[static_cast<std::size_t>(best) * k + col]) < 1e-12 * scale) return false;
        if (best != col) {
            for (int j = 0; j < k; ++j)
                std::swap(g[static_cast<std::size_t>(col) * k + j],
                          g[static_cast<std::size_t>(best) * k + j]);
            std::swap(rhs[static_cast<std::size_t>(col)], rhs[static_cast<std::size_t>(best)]);
        }
        const double d = g[static_cast<std::size_t>(col) * k + col];
        for (int r = col + 1; r < k; ++r) {
            const double f = g[static_cast<std::size_t>(r) * k + col] / d;
            if (f == 0.0) continue;
            for (int j = col; j < k; ++j)
                g[static_cast<std::size_t>(r) * k + j] -= f * g[static_cast<std::size_t>(col) * k + j];
            rhs[static_cast<std::size_t>(r)] -= f * rhs[static_cast<std::size_t>(col)];
        }
    }
    coeffs.assign(static_cast<std::size_t>(k), 0.0);
    for (int r = k - 1; r >= 0; --r) {
        double s = rhs[static_cast<std::size_t>(r)];
        for (int j = r + 1; j < k; ++j)
            s -= g[static_cast<std::size_t>(r) * k + j] * coeffs[static_cast<std::size_t>(j)];
        coeffs[static_cast<std::size_t>(r)] = s / g[static_cast<std::size_t>(r) * k + r];
    }
    return true;
}

}  // namespace

ReferenceSolution l1_min_oracle(const DenseMatrix& A, const std::vector<double>& v,
                                const std::vector<double>& weights) {
    if (A.cols > 12)
        throw std::invalid_argument("l1_min_oracle: enumeration bound is 12 columns, got " +
                                    std::to_string(A.cols));
    if (static_cast<int>(weights.size()) != A.cols)
        throw std::invalid_argument("l1_min_oracle: weights size mismatch");
    if (static_cast<int>(v.size()) != A.rows)
        throw std::invalid_argument("l1_min_oracle: rhs size mismatch");

    const double feas_tol = 1e-9;
    ReferenceSolution best;
    best.certificate = "exhaustive-support-enumeration";

    const int n = A.cols;
    const unsigned max_mask = 1u << n;
    std::vector<int> support;
    std::vector<double> coeffs;
    for (unsigned mask = 0; mask < max_mask; ++mask) {
        if (static_cast<int>(__builtin_popcount(mask)) > std::min(A.rows, n)) continue;
        support.clear();
        for (int j = 0; j < n; ++j)
            if (mask & (1u << j)) support.push_back(j);
        std::vector<double> xi(static_cast<std::size_t>(n), 0.0);
        if (!support.empty()) {
            if (!solve_support(A, support, v, coeffs)) continue;
            for (std::size_t t = 0; t < support.size(); ++t)
                xi[static_cast<std::size_t>(support[t])] = coeffs[t];
        }
        const std::vector<double> r = sub(A.apply(xi), v);
        if (norm2(r) > feas_tol) continue;
        double obj = 0.0;
        for (int j = 0; j < n; ++j)
            obj += weights[static_cast<std::size_t>(j)] * std::abs(xi[static_cast<std::size_t>(j)]);
        if (!best.feasible || obj < best.objective - 1e-15) {
            best.feasible = true;
            best.objective = obj;
            best.xi = xi;
        }
    }
    return best;
}

LinearInstance make_small_linear_instance() {
    const int side = 4;
    RadonGeometry geom;
    geom.side = side;
    geom.n_theta = 8;
    geom.n_s = 7;

    const PyramidShape shape = PyramidShape::plain(side, 2);
    // flatten order: l1 HL(4), l1 LH(4), l1 HH(4), l2 HL, l2 LH, l2 HH, approx
    std::vector<int> atoms = {0, 1, 2, 3, 4, 5, 6, 7, 12, 13, 14, 15};
    const WeightSpec w = WeightSpec::dyadic(2);
    const std::vector<double> flat_w = w.flat_weights(shape);

    LinearInstance inst;
    inst.B = DenseMatrix(geom.n_theta * geom.n_s, static_cast<int>(atoms.size()));
    inst.weights.reserve(atoms.size());
    const std::size_t total = static_cast<std::size_t>(shape.coeff_count());
    for (std::size_t col = 0; col < atoms.size(); ++col) {
        std::vector<double> unit(total, 0.0);
        unit[static_cast<std::size_t>(atoms[col])] = 1.0;
        const Image atom_img = haar_synthesis(CoeffPyramid::unflatten(shape, unit));
        const Sinogram s = radon_forward(atom_img, geom);
        for (int i = 0; i < inst.B.rows; ++i) inst.B.at(i, static_cast<int>(col)) = s.data[static_cast<std::size_t>(i)];
        inst.weights.push_back(flat_w[static_cast<std::size_t>(atoms[col])]);
    }

    const auto [lam_min, lam_max] = gram_eig_range(inst.B);
    inst.sigma_min = std::sqrt(std::max(lam_min, 0.0));
    inst.sigma_max = std::sqrt(lam_max);
    if (inst.sigma_min < 1e-3)
        throw std::runtime_error("small linear instance: composed operator is not injective enough");

    inst.xi_dag.assign(atoms.size(), 0.0);
    inst.xi_dag[11] = 1.0;   // approximation atom
    inst.xi_dag[8] = -0.8;   // level-2 detail
    inst.xi_dag[0] = 0.6;    // level-1 detail
    inst.v = inst.B.apply(inst.xi_dag);
    return inst;
}

std::pair<double, double> gram_eig_range(const DenseMatrix& A) {
    const int n = A.cols;
    std::vector<double> g(static_cast<std::size_t>(n) * n, 0.0);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            double s = 0.0;
            for (int i = 0; i < A.rows; ++i) s += A.at(i, p) * A.at(i, q);
            g[static_cast<std::size_t>(p) * n + q] = s;
        }
    // cyclic Jacobi sweeps
    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += std::abs(g[static_cast<std::size_t>(p) * n + q]);
        if (off < 1e-14) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = g[static_cast<std::size_t>(p) * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = g[static_cast<std::size_t>(p) * n + p];
                const double aqq = g[static_cast<std::size_t>(q) * n + q];
                const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
                const double c = std::cos(theta), s = std::sin(theta);
                for (int k = 0; k < n; ++k) {
                    const double gkp = g[static_cast<std::size_t>(k) * n + p];
                    const double gkq = g[static_cast<std::size_t>(k) * n + q];
                    g[static_cast<std::size_t>(k) * n + p] = c * gkp - s * gkq;
                    g[static_cast<std::size_t>(k) * n + q] = s * gkp + c * gkq;
                }
                for (int k = 0; k < n; ++k) {
                    const double gpk = g[static_cast<std::size_t>(p) * n + k];
                    const double gqk = g[static_cast<std::size_t>(q) * n + k];
                    g[static_cast<std::size_t>(p) * n + k] = c * gpk - s * gqk;
                    g[static_cast<std::size_t>(q) * n + k] = s * gpk + c * gqk;
                }
            }
    }
    double lo = g[0], hi = g[0];
    for (int k = 1; k < n; ++k) {
        lo = std::min(lo, g[static_cast<std::size_t>(k) * n + k]);
        hi = std::max(hi, g[static_cast<std::size_t>(k) * n + k]);
    }
    return {lo, hi};
}

RateCertificate convergence_sweep(const LinearInstance& inst, const ParamRule& rule,
                                  const std::vector<double>& deltas, const SweepConfig& cfg) {
    if (deltas.empty()) throw std::invalid_argument("convergence_sweep: empty delta grid");
    for (std::size_t i = 1; i < deltas.size(); ++i)
        if (!(deltas[i] < deltas[i - 1]))
            throw std::invalid_argument("convergence_sweep: delta grid must be strictly decreasing");
    if (cfg.trials < 1) throw std::invalid_argument("convergence_sweep: trials must be >= 1");

    const double lips = 2.0 * inst.sigma_max * inst.sigma_max;
    FISTAConfig fista_cfg;
    fista_cfg.step = 1.0 / lips;
    fista_cfg.iterations = cfg.solver_max_iters;
    fista_cfg.tol = cfg.solver_tol;
    fista_cfg.record_trace = false;

    RateCertificate cert;
    for (std::size_t di = 0; di < deltas.size(); ++di) {
        const double delta = deltas[di];
        const double alpha = std::max(rule.alpha(delta), 1e-12);
        std::vector<double> errs;
        const int trials = delta == 0.0 ? 1 : cfg.trials;
        for (int t = 0; t < trials; ++t) {
            std::vector<double> v_delta = inst.v;
            if (delta > 0.0) {
                Rng rng(Rng::mix(cfg.seed, di * 1000003ULL + static_cast<std::uint64_t>(t)));
                std::vector<double> z(v_delta.size());
                for (double& x : z) x = rng.gaussian();
                const double nz = norm2(z);
                for (std::size_t i = 0; i < z.size(); ++i)
                    v_delta[i] += delta * z[i] / nz;  // ||z|| = delta exactly
            }
            auto grad_f = [&](const std::vector<double>& xi) {
                std::vector<double> r = inst.B.apply(xi);
                for (std::size_t i = 0; i < r.size(); ++i) r[i] = 2.0 * (r[i] - v_delta[i]);
                return inst.B.apply_t(r);
            };
            auto prox = [&](std::vector<double>& x, double step) {
                prox_weighted_l1_flat(x, step * alpha, inst.weights);
            };
            const SolveReport rep =
                fista(grad_f, prox, std::vector<double>(inst.weights.size(), 0.0), fista_cfg);
            errs.push_back(norm2(sub(rep.final_x, inst.xi_dag)));
        }
        double mean = 0.0;
        for (double e : errs) mean += e;
        mean /= static_cast<double>(errs.size());
        double var = 0.0;
        for (double e : errs) var += (e - mean) * (e - mean);
        var /= static_cast<double>(errs.size());

        cert.deltas.push_back(delta);
        cert.alphas.push_back(alpha);
        cert.err_mean.push_back(mean);
        cert.err_std.push_back(std::sqrt(var));
        cert.h.push_back(0.0);       // stationary synthesis: D_alpha = D
        cert.g.push_back(delta);     // g = delta + ||K|| * Delta_rho = delta
    }

    // log-log least squares slope over positive-delta entries
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < cert.deltas.size(); ++i) {
        if (!(cert.deltas[i] > 0.0) || !(cert.err_mean[i] > 0.0)) continue;
        const double x = std::log10(cert.deltas[i]);
        const double y = std::log10(cert.err_mean[i]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    cert.slope = n >= 2 ? (n * sxy - sx * sy) / (n * sxx - sx * sx) : 0.0;
    return cert;
}

std::string RateCertificate::to_csv() const {
    std::ostringstream os;
    os << "delta,alpha,err_mean,err_std,h,g\n";
    for (std::size_t i = 0; i < deltas.size(); ++i)
        os << io::fmt(deltas[i]) << "," << io::fmt(alphas[i]) << "," << io::fmt(err_mean[i]) << ","
           << io::fmt(err_std[i]) << "," << io::fmt(h[i]) << "," << io::fmt(g[i]) << "\n";
    return os.str();
}

RuleCheckReport param_rule_check(const ParamRule& rule,
                                 const std::function<double(double)>& delta_rho) {
    RuleCheckReport rep;
    const int points = 13;
    for (int i = 0; i < points; ++i)
        rep.deltas.push_back(std::pow(10.0, 0.0 - 6.0 * i / (points - 1)));  // 1 down to 1e-6

    LimitSequence alpha_seq{"alpha", {}, false};
    LimitSequence drho_seq{"Delta_rho^2/alpha", {}, false};
    LimitSequence noise_seq{"delta^2/alpha", {}, false};
    for (double d : rep.deltas) {
        const double a = rule.alpha(d);
        if (!(a > 0.0)) throw std::invalid_argument("param_rule_check: rule must give alpha > 0");
        const double dr = delta_rho ? delta_rho(a) : 0.0;
        alpha_seq.values.push_back(a);
        drho_seq.values.push_back(dr * dr / a);
        noise_seq.values.push_back(d * d / a);
    }

    auto vanishes = [&rep](const std::vector<double>& s) {
        bool all_zero = true;
        for (double x : s) {
            if (!std::isfinite(x)) return false;
            if (x != 0.0) all_zero = false;
        }
        if (all_zero) return true;
        for (std::size_t i = 1; i < s.size(); ++i)
            if (s[i] > s[i - 1] * (1.0 + 1e-12)) return false;  // must be nonincreasing
        if (!(s.front() > 0.0) || !(s.back() > 0.0)) return s.back() == 0.0;
        // decay exponent along the grid; a constant sequence has slope 0
        const double slope = (std::log10(s.front()) - std::log10(s.back())) /
                             (std::log10(rep.deltas.front()) - std::log10(rep.deltas.back()));
        return slope >= 0.05;
    };

    alpha_seq.pass = vanishes(alpha_seq.values);
    drho_seq.pass = vanishes(drho_seq.values);
    noise_seq.pass = vanishes(noise_seq.values);
    rep.pass = alpha_seq.pass && drho_seq.pass && noise_seq.pass;
    rep.limits = {alpha_seq, drho_seq, noise_seq};
    return rep;
}

std::vector<double> checkpoint_delta(const std::vector<DecoderNet>& checkpoints, double rho,
                                     int samples, std::uint64_t seed) {
    if (checkpoints.size() < 2)
        throw std::invalid_argument("checkpoint_delta: need at least two checkpoints");
    if (!(rho > 0.0)) throw std::invalid_argument("checkpoint_delta: rho must be > 0");
    if (samples < 1) throw std::invalid_argument("checkpoint_delta: samples must be >= 1");
    const DecoderNet& ref = checkpoints.back();
    const PyramidShape shape = ref.spec.pyramid_shape();
    const std::size_t dim = static_cast<std::size_t>(shape.coeff_count());

    std::vector<double> deltas(checkpoints.size(), 0.0);
    for (int j = 0; j < samples; ++j) {
        Rng rng(Rng::mix(seed, static_cast<std::uint64_t>(j)));
        std::vector<double> flat(dim);
        for (double& x : flat) x = rng.gaussian();
        const double nz = norm2(flat);
        for (double& x : flat) x *= rho / nz;
        const CoeffPyramid xi = CoeffPyramid::unflatten(shape, flat);
        const Image ref_img = decode(xi, ref);
        for (std::size_t ci = 0; ci + 1 < checkpoints.size(); ++ci) {
            if (!(checkpoints[ci].spec == ref.spec))
                throw std::invalid_argument("checkpoint_delta: checkpoint specs differ");
            const Image img = decode(xi, checkpoints[ci]);
            double diff_sq = 0.0;
            for (std::size_t i = 0; i < img.pixels.size(); ++i) {
                const double d = img.pixels[i] - ref_img.pixels[i];
                diff_sq += d * d;
            }
            deltas[ci] = std::max(deltas[ci], std::sqrt(diff_sq));
        }
    }
    return deltas;
}

}  // namespace desyre
