#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "desyre/net.hpp"
#include "desyre/phantom.hpp"
#include "desyre/radon.hpp"
#include "desyre/solvers.hpp"

namespace desyre {

enum class ReconMethod { kFbp, kWavelet, kTv, kDesyre };
ReconMethod recon_method_from_string(const std::string& name);
std::string to_string(ReconMethod m);

/// One reconstruction job. Iteration/step fields left at zero pick the
/// method defaults (wavelet: 500 iterations, step 1/(2||K||^2); tv: 4000
/// primal-dual iterations; desyre: 2000 FISTA iterations, step 1e-3).
struct ReconRequest {
    ReconMethod method = ReconMethod::kFbp;
    RadonGeometry geom;
    double alpha = 0.0;
    FbpFilter filter = FbpFilter::kHann;
    int iterations = 0;
    double step = 0.0;
    int wavelet_levels = 2;
    std::string checkpoint;      // desyre only
    double op_norm_hint = 0.0;   // skips power iteration when > 0
    bool record_trace = false;

    void validate() const;
};

struct Metrics {
    double psnr_db = 0.0;
    double nmse = 0.0;
};

/// PSNR = 10 log10(max(u^2) / ||u - rec||^2), capped at the 300 dB
/// sentinel for exact reconstructions; NMSE = ||u - rec||^2 / ||u||^2.
Metrics compute_metrics(const Image& u, const Image& rec);

/// Dispatches to the configured method. Iterative methods start from the
/// FBP image (desyre from the encoded FBP image) and always report the
/// initial and final data residuals in the residual trace.
std::pair<Image, SolveReport> reconstruct(const Sinogram& v_delta, const ReconRequest& req);

struct BenchRow {
    int phantom_id = 0;
    std::string method;
    int views = 0;
    double noise_level = 0.0;
    double alpha = 0.0;
    double psnr_db = 0.0;
    double nmse = 0.0;
    int iters = 0;
    double seconds = 0.0;
};

struct MethodSummary {
    std::string method;
    double psnr_mean = 0.0, psnr_std = 0.0;
    double nmse_mean = 0.0, nmse_std = 0.0;
    int count = 0;
};

struct BenchResult {
    std::vector<BenchRow> rows;
    std::vector<MethodSummary> summaries;
    std::uint64_t checkpoint_hash = 0;  // 0 when no checkpoint involved

    /// Schema: phantom_id, method, views, noise_level, alpha, psnr_db,
    /// nmse, iters, seconds. With deterministic_timing the seconds column
    /// is written as 0 so reruns are byte-identical.
    std::string to_csv(bool deterministic_timing) const;
    std::string summary_csv() const;
    const MethodSummary& summary_for(const std::string& method) const;
};

/// Runs every request over the test split of the dataset, one noisy
/// sinogram per phantom (noise seed mixed with the phantom index).
BenchResult benchmark_suite(const std::filesystem::path& dataset_dir,
                            const std::vector<ReconRequest>& requests, const NoiseSpec& noise);

/// Same checkpoint, different view count, no retraining. The checkpoint
/// hash is recorded so callers can assert it matches the original study;
/// when expected_hash is nonzero a mismatch throws.
BenchResult operator_shift_study(const std::filesystem::path& dataset_dir,
                                 const std::vector<ReconRequest>& requests, int views,
                                 const NoiseSpec& noise, std::uint64_t expected_hash = 0);

struct GridPoint {
    double alpha = 0.0;
    double psnr_mean = 0.0;
    bool diverged = false;
};

struct GridSearchResult {
    double best_alpha = 0.0;
    double best_psnr = 0.0;
    std::vector<GridPoint> points;
};

/// Log-spaced alpha sweep (points_per_decade samples per decade) over a
/// few test phantoms; picks the alpha with the best mean PSNR. Divergent
/// runs are recorded and skipped.
GridSearchResult grid_search_alpha(const std::filesystem::path& dataset_dir,
                                   const ReconRequest& base, const NoiseSpec& noise,
                                   double alpha_lo, double alpha_hi, int points_per_decade = 5,
                                   int max_phantoms = 4);

}  // namespace desyre
