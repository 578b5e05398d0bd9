#include "desyre/train.hpp"

#include <cmath>
#include <sstream>

#include "desyre/io.hpp"
#include "desyre/parallel.hpp"
#include "desyre/rng.hpp"

namespace desyre {

void TrainConfig::validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
        throw std::invalid_argument("TrainConfig: penalties must be >= 0");
    if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be > 0");
    if (epochs < 1 || batch_size < 1)
        throw std::invalid_argument("TrainConfig: epochs and batch size must be >= 1");
}

namespace {

struct SampleResult {
    GradMap grads;
    double recon = 0.0;
    double reg = 0.0;  // unweighted R(E(u))
};

double param_norm_sq(const ParamStore& store) {
    double s = 0.0;
    for (const auto& [name, t] : store.params)
        for (double v : t.data) s += v * v;
    return s;
}

// Taped loss for one sample:  ||u - D(E(u))||^2 + alpha * R(E(u)).
// Returns the loss node; band nodes of xi are exposed for the R term.
Tape::Id build_sample_loss(Tape& tape, const NetSpec& spec, const LeafMap& leaves, Tape::Id input,
                           double alpha, const WeightSpec& w, double* recon_out, double* reg_out) {
    const PyramidNodes xi = build_encoder(tape, spec, leaves, input);
    const Tape::Id rec = build_decoder(tape, spec, leaves, xi);
    const Tape::Id diff = tape.add(rec, tape.scale(input, -1.0));
    const Tape::Id recon = tape.sum_squares(diff);

    Tape::Id reg = tape.sum_abs_weighted(xi.detail[0][0], w.for_level(1));
    for (int l = 1; l <= spec.levels; ++l)
        for (int b = 0; b < 3; ++b) {
            if (l == 1 && b == 0) continue;
            reg = tape.add(reg, tape.sum_abs_weighted(xi.detail[static_cast<std::size_t>(l - 1)]
                                                               [static_cast<std::size_t>(b)],
                                                      w.for_level(l)));
        }
    reg = tape.add(reg, tape.sum_abs_weighted(xi.approx, w.approx_weight));

    if (recon_out) *recon_out = tape.value(recon).data[0];
    if (reg_out) *reg_out = tape.value(reg).data[0];
    return tape.add(recon, tape.scale(reg, alpha));
}

SampleResult sample_gradient(const Image& u, const NetSpec& spec, const ParamStore& enc,
                             const ParamStore& dec, double alpha, const WeightSpec& w) {
    Tape tape;
    const Tape::Id input = tape.leaf(u.to_tensor());
    LeafMap leaves = register_params(tape, enc);
    for (const auto& [name, id] : register_params(tape, dec)) leaves.emplace(name, id);
    SampleResult res;
    const Tape::Id loss =
        build_sample_loss(tape, spec, leaves, input, alpha, w, &res.recon, &res.reg);
    const auto grads = tape.backward(loss, Tensor::scalar(1.0));
    for (const auto& [name, id] : leaves) res.grads.emplace(name, grads[static_cast<std::size_t>(id)]);
    return res;
}

}  // namespace

LossBreakdown eval_loss(const std::vector<const Image*>& batch, const EncoderNet& enc,
                        const DecoderNet& dec, const TrainConfig& cfg) {
    if (batch.empty()) throw std::invalid_argument("eval_loss: empty batch");
    const WeightSpec w = WeightSpec::dyadic(enc.spec.levels);
    LossBreakdown out;
    for (const Image* u : batch) {
        Tape tape;
        const Tape::Id input = tape.leaf(u->to_tensor());
        LeafMap leaves = register_params(tape, enc.params);
        for (const auto& [name, id] : register_params(tape, dec.params)) leaves.emplace(name, id);
        double recon = 0.0, reg = 0.0;
        build_sample_loss(tape, enc.spec, leaves, input, cfg.alpha, w, &recon, &reg);
        out.recon += recon;
        out.sparsity += cfg.alpha * reg;
        out.max_recon_norm = std::max(out.max_recon_norm, std::sqrt(recon));
    }
    const double m = static_cast<double>(batch.size());
    out.recon /= m;
    out.sparsity /= m;
    out.wpen = cfg.beta * param_norm_sq(dec.params) + cfg.gamma * param_norm_sq(enc.params);
    out.total = out.recon + out.sparsity + out.wpen;
    return out;
}

GradMap loss_gradient(const std::vector<const Image*>& batch, const EncoderNet& enc,
                      const DecoderNet& dec, const TrainConfig& cfg, LossBreakdown* breakdown) {
    if (batch.empty()) throw std::invalid_argument("loss_gradient: empty batch");
    const WeightSpec w = WeightSpec::dyadic(enc.spec.levels);
    std::vector<SampleResult> per_sample(batch.size());
    parallel_for(static_cast<std::int64_t>(batch.size()), [&](std::int64_t i) {
        per_sample[static_cast<std::size_t>(i)] = sample_gradient(
            *batch[static_cast<std::size_t>(i)], enc.spec, enc.params, dec.params, cfg.alpha, w);
    });

    const double inv_m = 1.0 / static_cast<double>(batch.size());
    GradMap total = std::move(per_sample[0].grads);
    for (auto& [name, g] : total)
        for (double& v : g.data) v *= inv_m;
    for (std::size_t i = 1; i < per_sample.size(); ++i)
        for (auto& [name, g] : total) {
            const Tensor& gi = per_sample[i].grads.at(name);
            for (std::size_t j = 0; j < g.data.size(); ++j) g.data[j] += inv_m * gi.data[j];
        }
    // analytic parameter-penalty gradients
    for (const auto& [name, t] : dec.params.params) {
        Tensor& g = total.at(name);
        for (std::size_t j = 0; j < g.data.size(); ++j) g.data[j] += 2.0 * cfg.beta * t.data[j];
    }
    for (const auto& [name, t] : enc.params.params) {
        Tensor& g = total.at(name);
        for (std::size_t j = 0; j < g.data.size(); ++j) g.data[j] += 2.0 * cfg.gamma * t.data[j];
    }

    if (breakdown) {
        LossBreakdown b;
        for (const auto& s : per_sample) {
            b.recon += s.recon;
            b.sparsity += cfg.alpha * s.reg;
            b.max_recon_norm = std::max(b.max_recon_norm, std::sqrt(s.recon));
        }
        b.recon *= inv_m;
        b.sparsity *= inv_m;
        b.wpen = cfg.beta * param_norm_sq(dec.params) + cfg.gamma * param_norm_sq(enc.params);
        b.total = b.recon + b.sparsity + b.wpen;
        *breakdown = b;
    }
    return total;
}

TrainResult train_on_images(const std::vector<Image>& images, const NetSpec& spec,
                            const TrainConfig& cfg) {
    cfg.validate();
    spec.validate();
    if (images.empty()) throw std::invalid_argument("train: dataset is empty");
    for (const Image& u : images)
        if (u.height != spec.side || u.width != spec.side)
            throw std::invalid_argument("train: image size does not match net side");

    TrainResult result{make_encoder(spec, cfg.seed), make_decoder(spec, cfg.seed), {}};
    AdamState adam;
    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    long step = 0;

    if (cfg.keep_epoch_checkpoints) result.trace.decoder_checkpoints.push_back(result.decoder);

    // Loss before the first update, so traces always expose the start value.
    {
        std::vector<const Image*> all;
        all.reserve(images.size());
        for (const Image& u : images) all.push_back(&u);
        const LossBreakdown b = eval_loss(all, result.encoder, result.decoder, cfg);
        result.trace.epochs.push_back(
            {0, b.recon, b.sparsity, b.wpen, b.total, b.max_recon_norm});
    }

    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng shuffle_rng(Rng::mix(cfg.seed, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.below(i)]);

        EpochStats stats;
        stats.epoch = epoch;
        int batches = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            std::vector<const Image*> batch;
            for (std::size_t i = start;
                 i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i)
                batch.push_back(&images[order[i]]);
            LossBreakdown b;
            GradMap grads = loss_gradient(batch, result.encoder, result.decoder, cfg, &b);
            if (!std::isfinite(b.total)) throw TrainDivergence(epoch, batches);
            stats.recon += b.recon;
            stats.sparsity += b.sparsity;
            stats.wpen = b.wpen;
            stats.constraint_violation = std::max(stats.constraint_violation, b.max_recon_norm);
            ++batches;

            ++step;
            adam_step(result.encoder.params, grads, adam, adam_cfg, step);
            adam_step(result.decoder.params, grads, adam, adam_cfg, step);
        }
        stats.recon /= batches;
        stats.sparsity /= batches;
        stats.total = stats.recon + stats.sparsity + stats.wpen;
        result.trace.epochs.push_back(stats);
        if (cfg.keep_epoch_checkpoints) result.trace.decoder_checkpoints.push_back(result.decoder);
    }
    return result;
}

TrainResult train_pair(const std::filesystem::path& dataset_dir, const NetSpec& spec,
                       const TrainConfig& cfg) {
    const DatasetMeta meta = load_dataset_meta(dataset_dir);
    std::vector<Image> images;
    for (int idx : meta.train_indices()) images.push_back(load_dataset_image(dataset_dir, idx));
    return train_on_images(images, spec, cfg);
}

void TrainTrace::write_csv(const std::filesystem::path& path) const {
    std::ostringstream os;
    os << "epoch,recon,sparsity,wpen,total,constraint_violation\n";
    for (const EpochStats& e : epochs)
        os << e.epoch << "," << io::fmt(e.recon) << "," << io::fmt(e.sparsity) << ","
           << io::fmt(e.wpen) << "," << io::fmt(e.total) << "," << io::fmt(e.constraint_violation)
           << "\n";
    io::write_text_file(path, os.str());
}

}  // namespace desyre
