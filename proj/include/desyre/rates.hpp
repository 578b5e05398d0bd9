#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "desyre/net.hpp"
#include "desyre/regularizers.hpp"

namespace desyre {

/// Small dense matrix, row-major; the rates experiments materialize the
/// composed forward map as one of these.
struct DenseMatrix {
    int rows = 0, cols = 0;
    std::vector<double> a;

    DenseMatrix() = default;
    DenseMatrix(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}
    double& at(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }
    std::vector<double> apply(const std::vector<double>& x) const;
    std::vector<double> apply_t(const std::vector<double>& y) const;
};

/// Parameter-choice rule alpha(delta) = c * delta^p.
struct ParamRule {
    double c = 1.0;
    double p = 1.0;
    std::string tag = "alpha=delta";

    double alpha(double delta) const;
};
ParamRule parse_param_rule(const std::string& text);

/// Penalty-minimizing solution of A xi = v found by exhaustive support
/// enumeration (every optimum of the weighted l1 program is attained at a
/// full-column-rank support, all of which are enumerated).
struct ReferenceSolution {
    bool feasible = false;
    std::vector<double> xi;
    double objective = 0.0;
    std::string certificate;
};
ReferenceSolution l1_min_oracle(const DenseMatrix& A, const std::vector<double>& v,
                                const std::vector<double>& weights);

/// Fixed small instance: the side-4 Radon transform composed with a
/// 12-atom Haar sub-dictionary (levels 1 detail bands HL/LH, level-2
/// details, approximation). Injective by construction; sigma_min is
/// checked at build time.
struct LinearInstance {
    DenseMatrix B;
    std::vector<double> weights;
    std::vector<double> xi_dag;
    std::vector<double> v;  // exact data B xi_dag
    double sigma_max = 0.0;
    double sigma_min = 0.0;
};
LinearInstance make_small_linear_instance();

struct RateCertificate {
    std::vector<double> deltas;
    std::vector<double> alphas;
    std::vector<double> err_mean;
    std::vector<double> err_std;
    std::vector<double> h;  // ||K(D_alpha(xi) - D(xi))||; identically 0 when stationary
    std::vector<double> g;  // delta + ||K|| * Delta_rho(alpha)
    double slope = 0.0;     // log-log least squares fit of err_mean vs delta

    std::string to_csv() const;
};

struct SweepConfig {
    int trials = 10;
    std::uint64_t seed = 21;
    double solver_tol = 1e-10;
    int solver_max_iters = 200000;
};

/// For each delta: draw noise with ||z|| = delta exactly, solve the convex
/// synthesis problem to tolerance, record the coefficient-space error to
/// the reference solution; errors are averaged over fresh noise
/// directions. h and g follow the stationary-synthesis definitions.
RateCertificate convergence_sweep(const LinearInstance& inst, const ParamRule& rule,
                                  const std::vector<double>& deltas, const SweepConfig& cfg = {});

struct LimitSequence {
    std::string name;
    std::vector<double> values;
    bool pass = false;
};

struct RuleCheckReport {
    bool pass = false;
    std::vector<double> deltas;
    std::vector<LimitSequence> limits;  // alpha, Delta^2/alpha, delta^2/alpha
};

/// Numerically verifies that alpha(delta), Delta_rho(alpha(delta))^2 /
/// alpha(delta) and delta^2 / alpha(delta) all decrease toward zero on a
/// log grid delta in [1e-6, 1].
RuleCheckReport param_rule_check(const ParamRule& rule,
                                 const std::function<double(double)>& delta_rho = nullptr);

/// Monte-Carlo lower bound on sup_{||xi|| <= rho} ||D_i(xi) - D_last(xi)||
/// for each checkpoint against the last one. A lower bound, not the sup:
/// it is the max over `samples` random draws.
std::vector<double> checkpoint_delta(const std::vector<DecoderNet>& checkpoints, double rho,
                                     int samples, std::uint64_t seed = 99);

/// Symmetric eigenvalue range via cyclic Jacobi; used for the injectivity
/// check. Returns (min, max) eigenvalues of A^T A, i.e. squared singular
/// values.
std::pair<double, double> gram_eig_range(const DenseMatrix& A);

}  // namespace desyre
