#pragma once

#include <functional>
#include <vector>

#include "desyre/image.hpp"
#include "desyre/radon.hpp"
#include "desyre/regularizers.hpp"

namespace desyre {

/// Raised when an iterative scheme produces a non-finite iterate; carries
/// the offending iteration so over-large steps can be diagnosed.
struct SolverDivergence : std::runtime_error {
    int iteration;
    explicit SolverDivergence(int iter)
        : std::runtime_error("solver: non-finite iterate at iteration " + std::to_string(iter)),
          iteration(iter) {}
};

struct FISTAConfig {
    double step = 1e-3;
    int iterations = 2000;
    double tol = 0.0;  // optional stop on ||x_k - x_{k-1}||; 0 disables
    bool record_trace = true;

    void validate() const;
};

struct PDConfig {
    double tau = 0.0;
    double sigma = 0.0;
    double relaxation = 1.0;
    int iterations = 4000;
    bool record_trace = true;

    /// Enforces tau*sigma*||A||^2 <= 1 for the stacked operator.
    void validate(double stacked_op_norm_sq) const;
};

struct SolveReport {
    std::vector<double> final_x;
    std::vector<double> objective_trace;
    std::vector<double> residual_trace;
    int iterations_run = 0;
    double seconds = 0.0;
};

using VecFn = std::function<std::vector<double>(const std::vector<double>&)>;
using ProxFn = std::function<void(std::vector<double>&, double)>;  // in place, (x, step)
using ValFn = std::function<double(const std::vector<double>&)>;

/// Beck-Teboulle accelerated proximal gradient with constant step:
///   x_k     = prox_g(y_k - s * grad_f(y_k))
///   t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2,  t_1 = 1
///   y_{k+1} = x_k + ((t_k - 1)/t_{k+1}) (x_k - x_{k-1})
/// objective/residual callbacks populate the trace when given.
SolveReport fista(const VecFn& grad_f, const ProxFn& prox_g, std::vector<double> x0,
                  const FISTAConfig& cfg, const ValFn& objective = nullptr,
                  const ValFn& residual = nullptr);

/// Linear operator handle for the primal-dual scheme; dimensions are those
/// of flattened images/sinograms.
struct LinOp {
    VecFn apply;
    VecFn adjoint;
    double norm = 0.0;  // upper bound on the spectral norm
    std::int64_t range_dim = 0;
};

LinOp radon_linop(const RadonGeometry& g, double op_norm_value);
LinOp identity_linop(std::int64_t dim);

/// Chambolle-Pock iteration for  min_u ||K u - v||^2 + alpha * TV(u)
/// with duals for the data term and the anisotropic TV term. The observer,
/// when set, sees (iteration, primal iterate, TV dual) after every step.
using PDObserver = std::function<void(int, const std::vector<double>&, const GradField&)>;
SolveReport chambolle_pock_tv(const std::vector<double>& v, const LinOp& K, double alpha,
                              const PDConfig& cfg, const Image& x0,
                              const PDObserver& observer = nullptr);

/// Suggested step pair tau = sigma = 1 / sqrt(||K||^2 + 8).
PDConfig pd_config_for(double op_norm_value, int iterations);

/// Exact value of  ||K(D(xi)) - v||^2 + alpha * R(xi)  for any synthesis
/// map D; used by traces and acceptance checks.
double objective_eval_desyre(const CoeffPyramid& xi, const Sinogram& v,
                             const std::function<Image(const CoeffPyramid&)>& decode, double alpha,
                             const WeightSpec& w);

}  // namespace desyre
