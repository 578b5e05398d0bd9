#include "desyre/recon.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "desyre/io.hpp"
#include "desyre/parallel.hpp"
#include "desyre/rng.hpp"

namespace desyre {

ReconMethod recon_method_from_string(const std::string& name) {
    if (name == "fbp") return ReconMethod::kFbp;
    if (name == "wavelet") return ReconMethod::kWavelet;
    if (name == "tv") return ReconMethod::kTv;
    if (name == "desyre") return ReconMethod::kDesyre;
    throw std::invalid_argument("unknown reconstruction method '" + name +
                                "' (expected fbp, wavelet, tv or desyre)");
}

std::string to_string(ReconMethod m) {
    switch (m) {
        case ReconMethod::kFbp: return "fbp";
        case ReconMethod::kWavelet: return "wavelet";
        case ReconMethod::kTv: return "tv";
        case ReconMethod::kDesyre: return "desyre";
    }
    return "?";
}

void ReconRequest::validate() const {
    geom.validate();
    if (alpha < 0.0) throw std::invalid_argument("ReconRequest: alpha must be >= 0");
    if (method == ReconMethod::kDesyre && checkpoint.empty())
        throw std::invalid_argument("ReconRequest: desyre needs a checkpoint path");
    if (method == ReconMethod::kWavelet &&
        (wavelet_levels < 1 || geom.side % (1 << wavelet_levels) != 0))
        throw std::invalid_argument("ReconRequest: wavelet levels incompatible with image side");
}

Metrics compute_metrics(const Image& u, const Image& rec) {
    if (u.height != rec.height || u.width != rec.width)
        throw std::invalid_argument("compute_metrics: image sizes differ");
    double peak_sq = 0.0, err_sq = 0.0, ref_sq = 0.0;
    for (std::size_t i = 0; i < u.pixels.size(); ++i) {
        peak_sq = std::max(peak_sq, u.pixels[i] * u.pixels[i]);
        const double d = u.pixels[i] - rec.pixels[i];
        err_sq += d * d;
        ref_sq += u.pixels[i] * u.pixels[i];
    }
    if (ref_sq == 0.0)
        throw std::invalid_argument("compute_metrics: ground truth is identically zero");
    Metrics m;
    m.nmse = err_sq / ref_sq;
    m.psnr_db = err_sq == 0.0 ? 300.0 : std::min(300.0, 10.0 * std::log10(peak_sq / err_sq));
    return m;
}

namespace {

double residual_norm(const Sinogram& v, const Image& u) {
    const Sinogram ku = radon_forward(u, v.geom);
    double s = 0.0;
    for (std::size_t i = 0; i < ku.data.size(); ++i) {
        const double d = ku.data[i] - v.data[i];
        s += d * d;
    }
    return std::sqrt(s);
}

std::pair<Image, SolveReport> solve_wavelet(const Sinogram& v, const ReconRequest& req,
                                            const Image& init, double k_norm) {
    const PyramidShape shape = PyramidShape::plain(req.geom.side, req.wavelet_levels);
    const WeightSpec weights = WeightSpec::uniform(req.wavelet_levels);
    const std::vector<double> flat_w = weights.flat_weights(shape);
    const RadonGeometry g = req.geom;

    auto grad_f = [&](const std::vector<double>& flat) {
        const CoeffPyramid xi = CoeffPyramid::unflatten(shape, flat);
        const Image du = haar_synthesis(xi);
        Sinogram r = radon_forward(du, g);
        for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = 2.0 * (r.data[i] - v.data[i]);
        const Image bp = radon_adjoint(r, g);
        return haar_analysis(bp, req.wavelet_levels).flatten();
    };
    auto prox = [&](std::vector<double>& x, double step) {
        prox_weighted_l1_flat(x, step * req.alpha, flat_w);
    };

    FISTAConfig cfg;
    cfg.step = req.step > 0.0 ? req.step : 1.0 / (2.0 * k_norm * k_norm);
    cfg.iterations = req.iterations > 0 ? req.iterations : 500;
    cfg.record_trace = req.record_trace;

    ValFn objective = nullptr, residual = nullptr;
    if (req.record_trace) {
        objective = [&](const std::vector<double>& flat) {
            const CoeffPyramid xi = CoeffPyramid::unflatten(shape, flat);
            const double r = residual_norm(v, haar_synthesis(xi));
            return r * r + req.alpha * weighted_l1(xi, weights);
        };
        residual = [&](const std::vector<double>& flat) {
            return residual_norm(v, haar_synthesis(CoeffPyramid::unflatten(shape, flat)));
        };
    }

    SolveReport rep = fista(grad_f, prox, haar_analysis(init, req.wavelet_levels).flatten(), cfg,
                            objective, residual);
    Image out = haar_synthesis(CoeffPyramid::unflatten(shape, rep.final_x));
    rep.final_x = out.pixels;
    return {std::move(out), std::move(rep)};
}

std::pair<Image, SolveReport> solve_desyre(const Sinogram& v, const ReconRequest& req,
                                           const Image& init) {
    auto ckpt = load_checkpoint(req.checkpoint);
    const EncoderNet& enc = ckpt.first;
    const DecoderNet& dec = ckpt.second;
    if (enc.spec.side != req.geom.side)
        throw std::invalid_argument("desyre: checkpoint side " + std::to_string(enc.spec.side) +
                                    " does not match geometry side " +
                                    std::to_string(req.geom.side));
    const PyramidShape shape = enc.spec.pyramid_shape();
    const WeightSpec weights = WeightSpec::dyadic(enc.spec.levels);
    const std::vector<double> flat_w = weights.flat_weights(shape);
    const RadonGeometry g = req.geom;

    // One tape per gradient: the decoder forward supplies both the data
    // residual and the reverse pass, and gradient flow is restricted to
    // the coefficient leaves (parameter gradients are never needed here).
    auto grad_f = [&](const std::vector<double>& flat) {
        const CoeffPyramid xi = CoeffPyramid::unflatten(shape, flat);
        Tape tape;
        const PyramidNodes nodes = register_pyramid(tape, xi);
        const LeafMap leaves = register_params(tape, dec.params);
        const Tape::Id out = build_decoder(tape, dec.spec, leaves, nodes);
        Sinogram r = radon_forward(Image::from_tensor(tape.value(out)), g);
        for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] = 2.0 * (r.data[i] - v.data[i]);
        const Image cotangent = radon_adjoint(r, g);
        std::vector<Tape::Id> wanted;
        for (const auto& level : nodes.detail)
            for (Tape::Id id : level) wanted.push_back(id);
        wanted.push_back(nodes.approx);
        const auto grads = tape.backward(out, cotangent.to_tensor(), &wanted);
        CoeffPyramid gp = CoeffPyramid::zeros(shape);
        for (std::size_t l = 0; l < nodes.detail.size(); ++l)
            for (std::size_t b = 0; b < 3; ++b)
                gp.detail[l][b] = grads[static_cast<std::size_t>(nodes.detail[l][b])];
        gp.approx = grads[static_cast<std::size_t>(nodes.approx)];
        return gp.flatten();
    };
    auto prox = [&](std::vector<double>& x, double step) {
        prox_weighted_l1_flat(x, step * req.alpha, flat_w);
    };

    FISTAConfig cfg;
    cfg.step = req.step > 0.0 ? req.step : 1e-3;
    cfg.iterations = req.iterations > 0 ? req.iterations : 2000;
    cfg.record_trace = req.record_trace;

    ValFn objective = nullptr, residual = nullptr;
    if (req.record_trace) {
        auto decode_fn = [&dec](const CoeffPyramid& p) { return decode(p, dec); };
        objective = [&, decode_fn](const std::vector<double>& flat) {
            return objective_eval_desyre(CoeffPyramid::unflatten(shape, flat), v, decode_fn,
                                         req.alpha, weights);
        };
        residual = [&](const std::vector<double>& flat) {
            return residual_norm(v, decode(CoeffPyramid::unflatten(shape, flat), dec));
        };
    }

    SolveReport rep =
        fista(grad_f, prox, encode(init, enc).flatten(), cfg, objective, residual);
    Image out = decode(CoeffPyramid::unflatten(shape, rep.final_x), dec);
    rep.final_x = out.pixels;
    return {std::move(out), std::move(rep)};
}

}  // namespace

std::pair<Image, SolveReport> reconstruct(const Sinogram& v_delta, const ReconRequest& req) {
    req.validate();
    if (!(v_delta.geom == req.geom))
        throw std::invalid_argument("reconstruct: sinogram geometry does not match request");

    const Image init = fbp(v_delta, req.geom, req.filter);
    if (req.method == ReconMethod::kFbp) {
        SolveReport rep;
        rep.final_x = init.pixels;
        return {init, std::move(rep)};
    }

    const double k_norm = req.op_norm_hint > 0.0 ? req.op_norm_hint : op_norm(req.geom).norm;
    const double r0 = residual_norm(v_delta, init);

    std::pair<Image, SolveReport> result = [&] {
        switch (req.method) {
            case ReconMethod::kWavelet:
                return solve_wavelet(v_delta, req, init, k_norm);
            case ReconMethod::kTv: {
                PDConfig cfg = pd_config_for(k_norm, req.iterations > 0 ? req.iterations : 4000);
                cfg.record_trace = req.record_trace;
                SolveReport rep =
                    chambolle_pock_tv(v_delta.data, radon_linop(req.geom, k_norm), req.alpha, cfg,
                                      init);
                Image out(req.geom.side, req.geom.side, rep.final_x);
                return std::make_pair(std::move(out), std::move(rep));
            }
            case ReconMethod::kDesyre:
                return solve_desyre(v_delta, req, init);
            default:
                throw std::logic_error("reconstruct: unhandled method");
        }
    }();

    if (!req.record_trace) {
        // keep the endpoint residuals available for the monotonicity checks
        result.second.residual_trace = {r0, residual_norm(v_delta, result.first)};
    }
    return result;
}

namespace {

MethodSummary summarize(const std::string& method, const std::vector<BenchRow>& rows) {
    MethodSummary s;
    s.method = method;
    std::vector<double> psnr, nmse;
    for (const BenchRow& r : rows)
        if (r.method == method) {
            psnr.push_back(r.psnr_db);
            nmse.push_back(r.nmse);
        }
    s.count = static_cast<int>(psnr.size());
    if (s.count == 0) return s;
    auto mean_std = [](const std::vector<double>& xs) {
        double mean = 0.0;
        for (double x : xs) mean += x;
        mean /= static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var /= static_cast<double>(xs.size());
        return std::make_pair(mean, std::sqrt(var));
    };
    std::tie(s.psnr_mean, s.psnr_std) = mean_std(psnr);
    std::tie(s.nmse_mean, s.nmse_std) = mean_std(nmse);
    return s;
}

}  // namespace

std::string BenchResult::to_csv(bool deterministic_timing) const {
    std::ostringstream os;
    os << "phantom_id,method,views,noise_level,alpha,psnr_db,nmse,iters,seconds\n";
    for (const BenchRow& r : rows)
        os << r.phantom_id << "," << r.method << "," << r.views << "," << io::fmt(r.noise_level)
           << "," << io::fmt(r.alpha) << "," << io::fmt(r.psnr_db) << "," << io::fmt(r.nmse) << ","
           << r.iters << "," << io::fmt(deterministic_timing ? 0.0 : r.seconds) << "\n";
    return os.str();
}

std::string BenchResult::summary_csv() const {
    std::ostringstream os;
    os << "method,psnr_mean,psnr_std,nmse_mean,nmse_std,n\n";
    for (const MethodSummary& s : summaries)
        os << s.method << "," << io::fmt(s.psnr_mean) << "," << io::fmt(s.psnr_std) << ","
           << io::fmt(s.nmse_mean) << "," << io::fmt(s.nmse_std) << "," << s.count << "\n";
    return os.str();
}

const MethodSummary& BenchResult::summary_for(const std::string& method) const {
    for (const MethodSummary& s : summaries)
        if (s.method == method) return s;
    throw std::out_of_range("benchmark summary: no method " + method);
}

BenchResult benchmark_suite(const std::filesystem::path& dataset_dir,
                            const std::vector<ReconRequest>& requests, const NoiseSpec& noise) {
    if (requests.empty()) throw std::invalid_argument("benchmark_suite: no methods requested");
    const DatasetMeta meta = load_dataset_meta(dataset_dir);
    const std::vector<int> test_ids = meta.test_indices();
    if (test_ids.empty()) throw std::invalid_argument("benchmark_suite: dataset has no test split");
    for (const ReconRequest& req : requests) req.validate();

    BenchResult result;
    for (const ReconRequest& req : requests)
        if (!req.checkpoint.empty()) result.checkpoint_hash = io::file_hash(req.checkpoint);

    // per-request operator norm (geometry may differ between requests)
    std::vector<double> norms(requests.size(), 0.0);
    for (std::size_t r = 0; r < requests.size(); ++r)
        norms[r] = requests[r].op_norm_hint > 0.0 ? requests[r].op_norm_hint
                                                  : op_norm(requests[r].geom).norm;

    result.rows.resize(test_ids.size() * requests.size());
    for (std::size_t p = 0; p < test_ids.size(); ++p) {
        const int phantom_id = test_ids[p];
        const Image truth = load_dataset_image(dataset_dir, phantom_id);
        for (std::size_t r = 0; r < requests.size(); ++r) {
            ReconRequest req = requests[r];
            req.op_norm_hint = norms[r];
            const Sinogram clean = radon_forward(truth, req.geom);
            NoiseSpec per_phantom = noise;
            per_phantom.seed = Rng::mix(noise.seed, static_cast<std::uint64_t>(phantom_id));
            const Sinogram noisy = add_noise(clean, per_phantom).first;
            auto [rec, rep] = reconstruct(noisy, req);
            const Metrics m = compute_metrics(truth, rec);
            BenchRow row;
            row.phantom_id = phantom_id;
            row.method = to_string(req.method);
            row.views = req.geom.n_theta;
            row.noise_level = noise.level;
            row.alpha = req.alpha;
            row.psnr_db = m.psnr_db;
            row.nmse = m.nmse;
            row.iters = rep.iterations_run;
            row.seconds = rep.seconds;
            result.rows[p * requests.size() + r] = std::move(row);
        }
    }
    for (const ReconRequest& req : requests)
        result.summaries.push_back(summarize(to_string(req.method), result.rows));
    return result;
}

BenchResult operator_shift_study(const std::filesystem::path& dataset_dir,
                                 const std::vector<ReconRequest>& requests, int views,
                                 const NoiseSpec& noise, std::uint64_t expected_hash) {
    std::vector<ReconRequest> shifted = requests;
    for (ReconRequest& req : shifted) {
        req.geom.n_theta = views;
        req.op_norm_hint = 0.0;  // geometry changed; recompute
    }
    BenchResult result = benchmark_suite(dataset_dir, shifted, noise);
    if (expected_hash != 0 && result.checkpoint_hash != expected_hash)
        throw std::runtime_error("operator_shift_study: checkpoint hash changed between studies");
    return result;
}

GridSearchResult grid_search_alpha(const std::filesystem::path& dataset_dir,
                                   const ReconRequest& base, const NoiseSpec& noise,
                                   double alpha_lo, double alpha_hi, int points_per_decade,
                                   int max_phantoms) {
    if (!(alpha_lo > 0.0) || !(alpha_hi >= alpha_lo))
        throw std::invalid_argument("grid_search_alpha: need 0 < alpha_lo <= alpha_hi");
    const double decades = std::log10(alpha_hi / alpha_lo);
    const int points = std::max(1, static_cast<int>(std::lround(decades * points_per_decade)) + 1);

    const DatasetMeta meta = load_dataset_meta(dataset_dir);
    std::vector<int> ids = meta.test_indices();
    if (static_cast<int>(ids.size()) > max_phantoms) ids.resize(static_cast<std::size_t>(max_phantoms));

    const double k_norm =
        base.op_norm_hint > 0.0 ? base.op_norm_hint : op_norm(base.geom).norm;

    std::vector<Image> truths;
    std::vector<Sinogram> sinos;
    for (int id : ids) {
        truths.push_back(load_dataset_image(dataset_dir, id));
        NoiseSpec per_phantom = noise;
        per_phantom.seed = Rng::mix(noise.seed, static_cast<std::uint64_t>(id));
        sinos.push_back(add_noise(radon_forward(truths.back(), base.geom), per_phantom).first);
    }

    GridSearchResult out;
    out.best_psnr = -1e300;
    for (int k = 0; k < points; ++k) {
        GridPoint pt;
        pt.alpha = points == 1
                       ? alpha_lo
                       : alpha_lo * std::pow(10.0, decades * static_cast<double>(k) /
                                                       static_cast<double>(points - 1));
        ReconRequest req = base;
        req.alpha = pt.alpha;
        req.op_norm_hint = k_norm;
        double mean = 0.0;
        try {
            for (std::size_t i = 0; i < sinos.size(); ++i) {
                const auto [rec, rep] = reconstruct(sinos[i], req);
                mean += compute_metrics(truths[i], rec).psnr_db;
            }
            pt.psnr_mean = mean / static_cast<double>(sinos.size());
        } catch (const SolverDivergence&) {
            pt.diverged = true;
        }
        if (!pt.diverged && pt.psnr_mean > out.best_psnr) {
            out.best_psnr = pt.psnr_mean;
            out.best_alpha = pt.alpha;
        }
        out.points.push_back(pt);
    }
    if (out.best_alpha == 0.0)
        throw std::runtime_error("grid_search_alpha: every grid point diverged");
    return out;
}

}  // namespace desyre
