#include "desyre/solvers.hpp"

#include <chrono>
#include <cmath>

#include "desyre/regularizers.hpp"

namespace desyre {

void FISTAConfig::validate() const {
    if (!(step > 0.0)) throw std::invalid_argument("FISTAConfig: step must be > 0");
    if (iterations < 1) throw std::invalid_argument("FISTAConfig: iterations must be >= 1");
    if (tol < 0.0) throw std::invalid_argument("FISTAConfig: tol must be >= 0");
}

void PDConfig::validate(double stacked_op_norm_sq) const {
    if (!(tau > 0.0) || !(sigma > 0.0))
        throw std::invalid_argument("PDConfig: steps must be positive");
    if (iterations < 1) throw std::invalid_argument("PDConfig: iterations must be >= 1");
    if (tau * sigma * stacked_op_norm_sq > 1.0 + 1e-12)
        throw std::invalid_argument("PDConfig: step condition tau*sigma*||A||^2 <= 1 violated (" +
                                    std::to_string(tau * sigma * stacked_op_norm_sq) + ")");
}

SolveReport fista(const VecFn& grad_f, const ProxFn& prox_g, std::vector<double> x0,
                  const FISTAConfig& cfg, const ValFn& objective, const ValFn& residual) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    SolveReport rep;
    std::vector<double> x_prev = x0;
    std::vector<double> y = std::move(x0);
    std::vector<double> x = x_prev;
    double t_k = 1.0;
    for (int k = 0; k < cfg.iterations; ++k) {
        std::vector<double> g = grad_f(y);
        x = y;
        axpy(-cfg.step, g, x);
        prox_g(x, cfg.step);
        if (!all_finite(x)) throw SolverDivergence(k + 1);
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_k * t_k));
        const double momentum = (t_k - 1.0) / t_next;
        y = x;
        for (std::size_t i = 0; i < x.size(); ++i) y[i] += momentum * (x[i] - x_prev[i]);
        double step_change = 0.0;
        if (cfg.tol > 0.0) {
            for (std::size_t i = 0; i < x.size(); ++i) {
                const double d = x[i] - x_prev[i];
                step_change += d * d;
            }
            step_change = std::sqrt(step_change);
        }
        x_prev = x;
        t_k = t_next;
        rep.iterations_run = k + 1;
        if (cfg.record_trace) {
            if (objective) rep.objective_trace.push_back(objective(x));
            if (residual) rep.residual_trace.push_back(residual(x));
        }
        if (cfg.tol > 0.0 && step_change <= cfg.tol) break;
    }
    rep.final_x = std::move(x);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

LinOp radon_linop(const RadonGeometry& g, double op_norm_value) {
    LinOp op;
    op.apply = [g](const std::vector<double>& x) {
        return radon_forward(Image(g.side, g.side, x), g).data;
    };
    op.adjoint = [g](const std::vector<double>& y) {
        Sinogram s(g);
        s.data = y;
        return radon_adjoint(s, g).pixels;
    };
    op.norm = op_norm_value;
    op.range_dim = static_cast<std::int64_t>(g.n_theta) * g.n_s;
    return op;
}

LinOp identity_linop(std::int64_t dim) {
    LinOp op;
    op.apply = [](const std::vector<double>& x) { return x; };
    op.adjoint = [](const std::vector<double>& y) { return y; };
    op.norm = 1.0;
    op.range_dim = dim;
    return op;
}

PDConfig pd_config_for(double op_norm_value, int iterations) {
    PDConfig cfg;
    cfg.tau = cfg.sigma = 1.0 / std::sqrt(op_norm_value * op_norm_value + 8.0);
    cfg.iterations = iterations;
    return cfg;
}

SolveReport chambolle_pock_tv(const std::vector<double>& v, const LinOp& K, double alpha,
                              const PDConfig& cfg, const Image& x0, const PDObserver& observer) {
    // ||grad||^2 <= 8 for forward differences in 2-D.
    cfg.validate(K.norm * K.norm + 8.0);
    if (alpha < 0.0) throw std::invalid_argument("chambolle_pock_tv: alpha must be >= 0");
    const auto t_start = std::chrono::steady_clock::now();
    const int h = x0.height, w = x0.width;

    std::vector<double> u = x0.pixels;
    std::vector<double> u_bar = u;
    std::vector<double> p(v.size(), 0.0);  // dual of the data term
    GradField q;                            // dual of the TV term
    q.height = h;
    q.width = w;
    q.dx.assign(u.size(), 0.0);
    q.dy.assign(u.size(), 0.0);

    SolveReport rep;
    for (int k = 0; k < cfg.iterations; ++k) {
        // data dual: prox of sigma * conjugate of ||. - v||^2
        std::vector<double> Ku_bar = K.apply(u_bar);
        for (std::size_t i = 0; i < p.size(); ++i)
            p[i] = (p[i] + cfg.sigma * (Ku_bar[i] - v[i])) / (1.0 + cfg.sigma / 2.0);
        // TV dual: projection onto the alpha-infinity ball
        const GradField gu = grad(Image(h, w, u_bar));
        for (std::size_t i = 0; i < q.dx.size(); ++i) {
            q.dx[i] = std::clamp(q.dx[i] + cfg.sigma * gu.dx[i], -alpha, alpha);
            q.dy[i] = std::clamp(q.dy[i] + cfg.sigma * gu.dy[i], -alpha, alpha);
        }
        // primal: u <- u - tau * (K^T p - div q)
        std::vector<double> KTp = K.adjoint(p);
        const Image divq = div(q);
        std::vector<double> u_new(u.size());
        for (std::size_t i = 0; i < u.size(); ++i)
            u_new[i] = u[i] - cfg.tau * (KTp[i] - divq.pixels[i]);
        if (!all_finite(u_new)) throw SolverDivergence(k + 1);
        for (std::size_t i = 0; i < u.size(); ++i)
            u_bar[i] = u_new[i] + cfg.relaxation * (u_new[i] - u[i]);
        u = std::move(u_new);
        rep.iterations_run = k + 1;
        if (observer) observer(k + 1, u, q);

        if (cfg.record_trace) {
            std::vector<double> Ku = K.apply(u);
            double resid_sq = 0.0;
            for (std::size_t i = 0; i < Ku.size(); ++i) {
                const double d = Ku[i] - v[i];
                resid_sq += d * d;
            }
            rep.residual_trace.push_back(std::sqrt(resid_sq));
            rep.objective_trace.push_back(resid_sq + alpha * tv_seminorm(Image(h, w, u)));
        }
    }
    rep.final_x = std::move(u);
    rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
}

double objective_eval_desyre(const CoeffPyramid& xi, const Sinogram& v,
                             const std::function<Image(const CoeffPyramid&)>& decode, double alpha,
                             const WeightSpec& w) {
    const Sinogram kd = radon_forward(decode(xi), v.geom);
    double resid_sq = 0.0;
    for (std::size_t i = 0; i < kd.data.size(); ++i) {
        const double d = kd.data[i] - v.data[i];
        resid_sq += d * d;
    }
    return resid_sq + alpha * weighted_l1(xi, w);
}

}  // namespace desyre
