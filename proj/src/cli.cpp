#include "desyre/cli.hpp"

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "desyre/io.hpp"
#include "desyre/net.hpp"
#include "desyre/parallel.hpp"
#include "desyre/phantom.hpp"
#include "desyre/radon.hpp"
#include "desyre/rates.hpp"
#include "desyre/recon.hpp"
#include "desyre/solvers.hpp"
#include "desyre/train.hpp"

namespace desyre {

namespace {

namespace fs = std::filesystem;

void write_resolved_config(CLI::App* sub, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    io::write_text_file(out_dir / "config.resolved", sub->config_to_str(true, false));
}

void write_trace_csv(const fs::path& path, const SolveReport& rep) {
    std::ostringstream os;
    os << "iter,objective,residual\n";
    const std::size_t n = std::max(rep.objective_trace.size(), rep.residual_trace.size());
    for (std::size_t i = 0; i < n; ++i) {
        os << (i + 1) << ",";
        os << (i < rep.objective_trace.size() ? io::fmt(rep.objective_trace[i]) : "") << ",";
        os << (i < rep.residual_trace.size() ? io::fmt(rep.residual_trace[i]) : "") << "\n";
    }
    io::write_text_file(path, os.str());
}

std::vector<double> parse_delta_range(const std::string& text, int points) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) return {std::stod(text)};
    const double hi = std::stod(text.substr(0, colon));
    const double lo = std::stod(text.substr(colon + 1));
    if (!(hi > lo) || !(lo > 0.0))
        throw CLI::ValidationError("--deltas", "expected 'high:low' with high > low > 0");
    const int n = points > 0
                      ? points
                      : static_cast<int>(std::lround(std::log10(hi / lo))) + 1;
    std::vector<double> out;
    for (int i = 0; i < n; ++i)
        out.push_back(hi * std::pow(lo / hi, static_cast<double>(i) / std::max(1, n - 1)));
    return out;
}

struct GeometryFlags {
    int views = 60;
    int dets = 33;
    int side = 64;

    void attach(CLI::App* sub, bool with_side = true) {
        sub->add_option("--views", views, "projection angles in [0, pi) (default 60)");
        sub->add_option("--dets", dets, "detector offsets across [-3/2, 3/2] (default 33)");
        if (with_side) sub->add_option("--side", side, "image side in pixels (default 64)");
    }
    RadonGeometry geometry() const {
        RadonGeometry g;
        g.n_theta = views;
        g.n_s = dets;
        g.side = side;
        return g;
    }
};

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"desyre: sparse-view CT reconstruction with a learned synthesis prior"};
    app.require_subcommand(1);

    int threads = 1;
    if (const char* env = std::getenv("DESYRE_THREADS")) threads = std::max(1, std::atoi(env));
    app.add_option("--threads", threads,
                   "worker cap for internal parallelism; 1 guarantees byte-reproducible outputs");

    // ---------------- phantom ----------------
    auto* phantom = app.add_subcommand("phantom", "generate an ellipse-phantom dataset");
    struct {
        int side = 64;
        int count = 10;
        int test = 0;
        std::uint64_t seed = 7;
        std::uint64_t split_seed = 13;
        std::string out;
        bool pgm = false;
        std::string config;
    } ph;
    phantom->add_option("--side", ph.side, "image side, power of two (default 64)");
    phantom->add_option("--count", ph.count, "total number of images (default 10)")->check(CLI::PositiveNumber);
    phantom->add_option("--test", ph.test, "images reserved for the test split (default 0)");
    phantom->add_option("--seed", ph.seed, "generator seed (default 7)");
    phantom->add_option("--split-seed", ph.split_seed, "train/test split seed (default 13)");
    phantom->add_option("--out", ph.out, "output dataset directory")->required();
    phantom->add_flag("--pgm", ph.pgm, "also export 16-bit PGM previews");
    phantom->add_option("--config", ph.config, "key = value file merged under command-line flags");

    // ---------------- sino ----------------
    auto* sino = app.add_subcommand("sino", "simulate sparse-view measurements of one image");
    struct {
        std::string image;
        std::string dataset;
        int index = 0;
        double noise = 0.0;
        std::uint64_t noise_seed = 0;
        std::string out;
        bool pgm = false;
        GeometryFlags geo;
        std::string config;
    } sn;
    sino->add_option("--image", sn.image, "input image .dsr file");
    sino->add_option("--dataset", sn.dataset, "dataset directory (use with --index)");
    sino->add_option("--index", sn.index, "image index within --dataset");
    sn.geo.attach(sino);
    sino->add_option("--noise", sn.noise, "relative gaussian noise level (default 0, paper case 0.05)");
    sino->add_option("--noise-seed", sn.noise_seed, "noise seed (default 0)");
    sino->add_option("--out", sn.out, "output run directory")->required();
    sino->add_flag("--pgm", sn.pgm, "also export a normalized 16-bit PGM view");
    sino->add_option("--config", sn.config, "key = value file merged under command-line flags");

    // ---------------- train ----------------
    auto* train = app.add_subcommand("train", "train the sparse encoder-decoder pair");
    struct {
        std::string dataset;
        std::string out;
        int levels = 2;
        int base_channels = 16;
        int latent = 2;
        double alpha = 1e-2;
        double beta = 1e-4;
        double gamma = 1e-4;
        double lr = 1e-3;
        int epochs = 150;
        int batch = 6;
        std::uint64_t seed = 1;
        std::string config;
    } tr;
    train->add_option("--dataset", tr.dataset, "dataset directory")->required();
    train->add_option("--out", tr.out, "output run directory")->required();
    train->add_option("--levels", tr.levels, "down/upsampling steps (default 2; reference setup uses 4)");
    train->add_option("--base-channels", tr.base_channels,
                      "first sequential layer width (default 16; reference setup uses 64)");
    train->add_option("--latent", tr.latent, "latent channels per scale (default 2)");
    train->add_option("--alpha", tr.alpha, "sparsity weight (default 1e-2)");
    train->add_option("--beta", tr.beta, "decoder parameter penalty (default 1e-4)");
    train->add_option("--gamma", tr.gamma, "encoder parameter penalty (default 1e-4)");
    train->add_option("--lr", tr.lr, "Adam learning rate (default 1e-3)");
    train->add_option("--epochs", tr.epochs, "training epochs (default 150)");
    train->add_option("--batch", tr.batch, "batch size (default 6)");
    train->add_option("--seed", tr.seed, "initialization/shuffle seed (default 1)");
    train->add_option("--config", tr.config, "key = value file merged under command-line flags");

    // ---------------- recon ----------------
    auto* recon = app.add_subcommand("recon", "reconstruct one sinogram");
    struct {
        std::string sino;
        std::string method = "fbp";
        double alpha = 0.0;
        int iterations = 0;
        double step = 0.0;
        int levels = 2;
        std::string checkpoint;
        std::string filter = "hann";
        std::string truth;
        std::string out;
        bool trace = false;
        std::string config;
    } rc;
    recon->add_option("--sino", rc.sino, "input sinogram .dsr file")->required();
    recon->add_option("--method", rc.method, "fbp | wavelet | tv | desyre");
    recon->add_option("--alpha", rc.alpha,
                      "regularization weight (defaults: wavelet 1e-8, tv 5e-5, desyre 1e-6)");
    recon->add_option("--iterations", rc.iterations,
                      "solver iterations (defaults: wavelet 500, tv 4000, desyre 2000)");
    recon->add_option("--step", rc.step, "FISTA step (default: desyre 1e-3, wavelet 1/(2||K||^2))");
    recon->add_option("--levels", rc.levels, "wavelet pyramid depth (default 2)");
    recon->add_option("--checkpoint", rc.checkpoint, "trained checkpoint (.dsr), desyre only");
    recon->add_option("--filter", rc.filter, "fbp filter: hann | ram-lak (default hann)");
    recon->add_option("--truth", rc.truth, "ground-truth image for metrics output");
    recon->add_flag("--trace", rc.trace, "record per-iteration objective/residual to trace.csv");
    recon->add_option("--out", rc.out, "output run directory")->required();
    recon->add_option("--config", rc.config, "key = value file merged under command-line flags");

    // ---------------- bench ----------------
    auto* bench = app.add_subcommand("bench", "benchmark methods over the dataset test split");
    struct {
        std::string dataset;
        std::string methods = "fbp,wavelet,tv,desyre";
        std::string checkpoint;
        double noise = 0.0;
        std::uint64_t noise_seed = 0;
        double alpha_wavelet = 1e-8;
        double alpha_tv = 5e-5;
        double alpha_desyre = 1e-6;
        int iters_wavelet = 500;
        int iters_tv = 4000;
        int iters_desyre = 2000;
        double step_desyre = 1e-3;
        std::string grid;  // "method:lo:hi"
        int grid_phantoms = 4;
        std::string out;
        GeometryFlags geo;
        std::string config;
    } bn;
    bench->add_option("--dataset", bn.dataset, "dataset directory")->required();
    bench->add_option("--methods", bn.methods, "comma list of fbp,wavelet,tv,desyre");
    bench->add_option("--checkpoint", bn.checkpoint, "trained checkpoint for desyre");
    bn.geo.attach(bench, false);
    bench->add_option("--noise", bn.noise, "relative noise level (default 0)");
    bench->add_option("--noise-seed", bn.noise_seed, "noise seed (default 0)");
    bench->add_option("--alpha-wavelet", bn.alpha_wavelet,
                      "wavelet alpha (default 1e-8; noisy reference 2e-7)");
    bench->add_option("--alpha-tv", bn.alpha_tv, "tv alpha (default 5e-5; noisy reference 1e-4)");
    bench->add_option("--alpha-desyre", bn.alpha_desyre,
                      "desyre alpha (default 1e-6; noisy reference 3e-5)");
    bench->add_option("--iters-wavelet", bn.iters_wavelet, "wavelet iterations (default 500)");
    bench->add_option("--iters-tv", bn.iters_tv, "tv iterations (default 4000)");
    bench->add_option("--iters-desyre", bn.iters_desyre, "desyre iterations (default 2000)");
    bench->add_option("--step-desyre", bn.step_desyre, "desyre FISTA step (default 1e-3)");
    bench->add_option("--grid", bn.grid,
                      "per-method alpha grid search, format method:lo:hi (5 points/decade)");
    bench->add_option("--grid-phantoms", bn.grid_phantoms,
                      "test phantoms used by the grid search (default 4)");
    bench->add_option("--out", bn.out, "output run directory")->required();
    bench->add_option("--config", bn.config, "key = value file merged under command-line flags");

    // ---------------- rates ----------------
    auto* rates = app.add_subcommand("rates", "convergence-rate experiments on the small instance");
    struct {
        std::string instance = "small-linear";
        std::string rule = "alpha=delta";
        std::string deltas = "1e-1:1e-4";
        int points = 0;
        int trials = 10;
        std::uint64_t seed = 21;
        std::string check_rule;
        std::string out;
        std::string config;
    } rt;
    rates->add_option("--instance", rt.instance, "instance name (small-linear)");
    rates->add_option("--rule", rt.rule, "parameter rule, e.g. alpha=delta, alpha=sqrt_delta");
    rates->add_option("--deltas", rt.deltas, "noise grid high:low (default 1e-1:1e-4)");
    rates->add_option("--points", rt.points, "grid points (default: one per decade)");
    rates->add_option("--trials", rt.trials, "noise directions per delta (default 10)");
    rates->add_option("--seed", rt.seed, "noise seed (default 21)");
    rates->add_option("--check-rule", rt.check_rule,
                      "only verify the vanishing-limit conditions for this rule");
    rates->add_option("--out", rt.out, "output run directory (required for sweeps)");
    rates->add_option("--config", rt.config, "key = value file merged under command-line flags");

    // ---------------- metrics ----------------
    auto* metrics = app.add_subcommand("metrics", "PSNR/NMSE between two images");
    struct {
        std::string truth;
        std::string recon;
    } mt;
    metrics->add_option("--truth", mt.truth, "ground-truth .dsr image")->required();
    metrics->add_option("--recon", mt.recon, "reconstruction .dsr image")->required();

    // The resolution order is defaults < config file < command-line flags.
    // Config entries are injected right after the subcommand token and the
    // command line is reparsed; the take-last policy makes explicit flags
    // win over injected ones.
    for (CLI::App* sub : {phantom, sino, train, recon, bench, rates, metrics})
        for (CLI::Option* opt : sub->get_options())
            opt->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    CLI::App* active = nullptr;
    std::string config_path;
    if (*phantom) {
        active = phantom;
        config_path = ph.config;
    } else if (*sino) {
        active = sino;
        config_path = sn.config;
    } else if (*train) {
        active = train;
        config_path = tr.config;
    } else if (*recon) {
        active = recon;
        config_path = rc.config;
    } else if (*bench) {
        active = bench;
        config_path = bn.config;
    } else if (*rates) {
        active = rates;
        config_path = rt.config;
    }
    if (active != nullptr && !config_path.empty()) {
        std::map<std::string, std::string> entries;
        try {
            entries = io::read_manifest(config_path);
        } catch (const std::exception& e) {
            std::cerr << "error: " << e.what() << "\n";
            return 1;
        }
        std::vector<std::string> tokens;
        for (int i = 0; i < argc; ++i) tokens.emplace_back(argv[i]);
        std::vector<std::string> merged;
        bool injected = false;
        for (const std::string& tok : tokens) {
            merged.push_back(tok);
            if (!injected && tok == active->get_name()) {
                for (const auto& [key, value] : entries) {
                    if (key == "config" || key == "help") {
                        std::cerr << "error: config file may not set '" << key << "'\n";
                        return 1;
                    }
                    try {
                        active->get_option("--" + key);
                    } catch (const CLI::OptionNotFound&) {
                        std::cerr << "error: unknown config key '" << key << "' in " << config_path
                                  << "\n";
                        return 1;
                    }
                    merged.push_back("--" + key);
                    merged.push_back(value);
                }
                injected = true;
            }
        }
        std::vector<const char*> merged_argv;
        merged_argv.reserve(merged.size());
        for (const std::string& tok : merged) merged_argv.push_back(tok.c_str());
        try {
            app.parse(static_cast<int>(merged_argv.size()), merged_argv.data());
        } catch (const CLI::ParseError& e) {
            const int code = app.exit(e);
            return code == 0 ? 0 : 1;
        }
    }

    threads::set_count(threads);
    const bool deterministic = threads <= 1;

    try {
        if (*phantom) {
            if (ph.test >= ph.count)
                throw std::invalid_argument("phantom: --test must be smaller than --count");
            DatasetMeta meta;
            meta.spec.side = ph.side;
            meta.spec.seed = ph.seed;
            meta.train_count = ph.count - ph.test;
            meta.test_count = ph.test;
            meta.split_seed = ph.split_seed;
            write_resolved_config(phantom, ph.out);
            save_dataset(ph.out, meta, ph.pgm);
            std::cout << "wrote " << meta.total() << " images to " << ph.out << "\n";
        } else if (*sino) {
            Image u;
            if (!sn.image.empty())
                u = io::read_image_dsr(sn.image);
            else if (!sn.dataset.empty())
                u = load_dataset_image(sn.dataset, sn.index);
            else
                throw std::invalid_argument("sino: provide --image or --dataset/--index");
            RadonGeometry g = sn.geo.geometry();
            g.side = u.width;
            const Sinogram clean = radon_forward(u, g);
            NoiseSpec noise;
            noise.level = sn.noise;
            noise.seed = sn.noise_seed;
            const auto noisy = add_noise(clean, noise);
            write_resolved_config(sino, sn.out);
            fs::create_directories(fs::path(sn.out) / "out");
            io::write_sinogram_dsr(fs::path(sn.out) / "out" / "sino.dsr", noisy.first);
            if (sn.pgm) {
                Image view(noisy.first.geom.n_theta, noisy.first.geom.n_s, noisy.first.data);
                const double peak = max_pixel(view);
                if (peak > 0.0)
                    for (double& x : view.pixels) x /= peak;
                io::write_pgm16(fs::path(sn.out) / "out" / "sino.pgm", view);
            }
            std::cout << "delta = " << io::fmt(noisy.second) << "\n";
        } else if (*train) {
            const DatasetMeta meta = load_dataset_meta(tr.dataset);
            NetSpec spec;
            spec.side = meta.spec.side;
            spec.levels = tr.levels;
            spec.base_channels = tr.base_channels;
            spec.latent_channels = tr.latent;
            TrainConfig cfg;
            cfg.alpha = tr.alpha;
            cfg.beta = tr.beta;
            cfg.gamma = tr.gamma;
            cfg.lr = tr.lr;
            cfg.epochs = tr.epochs;
            cfg.batch_size = tr.batch;
            cfg.seed = tr.seed;
            write_resolved_config(train, tr.out);
            const TrainResult result = train_pair(tr.dataset, spec, cfg);
            fs::create_directories(fs::path(tr.out) / "out");
            save_checkpoint(fs::path(tr.out) / "out" / "checkpoint.dsr", result.encoder,
                            result.decoder);
            result.trace.write_csv(fs::path(tr.out) / "trace.csv");
            const EpochStats& first = result.trace.epochs.front();
            const EpochStats& last = result.trace.epochs.back();
            std::cout << "loss " << io::fmt(first.total) << " -> " << io::fmt(last.total) << " over "
                      << cfg.epochs << " epochs\n";
        } else if (*recon) {
            if (rc.method == "desyre" && rc.checkpoint.empty())
                throw std::invalid_argument("recon --method desyre requires --checkpoint");
            const Sinogram v = io::read_sinogram_dsr(rc.sino);
            ReconRequest req;
            req.method = recon_method_from_string(rc.method);
            req.geom = v.geom;
            req.alpha = rc.alpha > 0.0 ? rc.alpha : (req.method == ReconMethod::kWavelet ? 1e-8
                                                     : req.method == ReconMethod::kTv    ? 5e-5
                                                     : req.method == ReconMethod::kDesyre ? 1e-6
                                                                                          : 0.0);
            req.iterations = rc.iterations;
            req.step = rc.step;
            req.wavelet_levels = rc.levels;
            req.checkpoint = rc.checkpoint;
            req.filter = fbp_filter_from_string(rc.filter);
            req.record_trace = rc.trace;
            write_resolved_config(recon, rc.out);
            const auto [image, report] = reconstruct(v, req);
            fs::create_directories(fs::path(rc.out) / "out");
            io::write_image_dsr(fs::path(rc.out) / "out" / "recon.dsr", image);
            io::write_pgm16(fs::path(rc.out) / "out" / "recon.pgm", image);
            write_trace_csv(fs::path(rc.out) / "trace.csv", report);
            if (!rc.truth.empty()) {
                const Metrics m = compute_metrics(io::read_image_dsr(rc.truth), image);
                std::cout << "psnr_db = " << io::fmt(m.psnr_db) << "\nnmse = " << io::fmt(m.nmse)
                          << "\n";
            }
            std::cout << "iterations = " << report.iterations_run << "\n";
        } else if (*bench) {
            RadonGeometry g = bn.geo.geometry();
            g.side = load_dataset_meta(bn.dataset).spec.side;
            NoiseSpec noise;
            noise.level = bn.noise;
            noise.seed = bn.noise_seed;
            std::vector<ReconRequest> requests;
            std::string item;
            std::stringstream ss(bn.methods);
            while (std::getline(ss, item, ',')) {
                ReconRequest req;
                req.method = recon_method_from_string(item);
                req.geom = g;
                switch (req.method) {
                    case ReconMethod::kFbp: break;
                    case ReconMethod::kWavelet:
                        req.alpha = bn.alpha_wavelet;
                        req.iterations = bn.iters_wavelet;
                        break;
                    case ReconMethod::kTv:
                        req.alpha = bn.alpha_tv;
                        req.iterations = bn.iters_tv;
                        break;
                    case ReconMethod::kDesyre:
                        req.alpha = bn.alpha_desyre;
                        req.iterations = bn.iters_desyre;
                        req.step = bn.step_desyre;
                        req.checkpoint = bn.checkpoint;
                        break;
                }
                requests.push_back(std::move(req));
            }
            if (!bn.grid.empty()) {
                std::stringstream gs(bn.grid);
                std::string method, lo_s, hi_s;
                std::getline(gs, method, ':');
                std::getline(gs, lo_s, ':');
                std::getline(gs, hi_s, ':');
                bool found = false;
                for (ReconRequest& req : requests)
                    if (to_string(req.method) == method) {
                        const GridSearchResult res =
                            grid_search_alpha(bn.dataset, req, noise, std::stod(lo_s),
                                              std::stod(hi_s), 5, bn.grid_phantoms);
                        req.alpha = res.best_alpha;
                        std::cout << "grid " << method << ": alpha = " << io::fmt(res.best_alpha)
                                  << " (psnr " << io::fmt(res.best_psnr) << ")\n";
                        found = true;
                    }
                if (!found) throw std::invalid_argument("bench --grid names an unrequested method");
            }
            write_resolved_config(bench, bn.out);
            const BenchResult result = benchmark_suite(bn.dataset, requests, noise);
            io::write_text_file(fs::path(bn.out) / "bench.csv", result.to_csv(deterministic));
            io::write_text_file(fs::path(bn.out) / "summary.csv", result.summary_csv());
            std::cout << result.summary_csv();
            if (result.checkpoint_hash != 0)
                std::cout << "checkpoint_hash = " << result.checkpoint_hash << "\n";
        } else if (*rates) {
            if (!rt.check_rule.empty()) {
                const RuleCheckReport rep = param_rule_check(parse_param_rule(rt.check_rule));
                for (const LimitSequence& seq : rep.limits)
                    std::cout << seq.name << ": " << (seq.pass ? "vanishes" : "does not vanish")
                              << "\n";
                std::cout << "rule " << rt.check_rule << ": " << (rep.pass ? "PASS" : "FAIL")
                          << "\n";
                return rep.pass ? 0 : 1;
            }
            if (rt.instance != "small-linear")
                throw std::invalid_argument("rates: unknown instance '" + rt.instance + "'");
            if (rt.out.empty()) throw std::invalid_argument("rates: --out is required for sweeps");
            const LinearInstance inst = make_small_linear_instance();
            SweepConfig cfg;
            cfg.trials = rt.trials;
            cfg.seed = rt.seed;
            const RateCertificate cert = convergence_sweep(
                inst, parse_param_rule(rt.rule), parse_delta_range(rt.deltas, rt.points), cfg);
            write_resolved_config(rates, rt.out);
            io::write_text_file(fs::path(rt.out) / "rates.csv", cert.to_csv());
            std::cout << cert.to_csv();
            std::cout << "slope = " << io::fmt(cert.slope) << "\n";
        } else if (*metrics) {
            const Metrics m =
                compute_metrics(io::read_image_dsr(mt.truth), io::read_image_dsr(mt.recon));
            std::cout << "psnr_db = " << io::fmt(m.psnr_db) << "\nnmse = " << io::fmt(m.nmse)
                      << "\n";
        }
    } catch (const SolverDivergence& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const TrainDivergence& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace desyre
