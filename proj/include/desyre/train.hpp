#pragma once

#include <filesystem>
#include <vector>

#include "desyre/net.hpp"
#include "desyre/phantom.hpp"
#include "desyre/regularizers.hpp"

namespace desyre {

struct TrainConfig {
    double alpha = 1e-2;  // sparsity weight
    double beta = 1e-4;   // decoder parameter penalty
    double gamma = 1e-4;  // encoder parameter penalty
    double lr = 1e-3;
    int epochs = 150;
    int batch_size = 6;
    std::uint64_t seed = 1;
    bool keep_epoch_checkpoints = false;

    void validate() const;
};

struct TrainDivergence : std::runtime_error {
    int epoch, batch;
    TrainDivergence(int e, int b)
        : std::runtime_error("training diverged at epoch " + std::to_string(e) + ", batch " +
                             std::to_string(b)),
          epoch(e),
          batch(b) {}
};

struct EpochStats {
    int epoch = 0;           // 0 = evaluation before the first update
    double recon = 0.0;      // mean ||u - D(E(u))||^2
    double sparsity = 0.0;   // alpha * mean R(E(u))
    double wpen = 0.0;       // beta ||theta||^2 + gamma ||eta||^2
    double total = 0.0;
    double constraint_violation = 0.0;  // max_i ||u_i - D(E(u_i))||
};

struct TrainTrace {
    std::vector<EpochStats> epochs;
    std::vector<DecoderNet> decoder_checkpoints;  // when requested: init + per epoch

    void write_csv(const std::filesystem::path& path) const;
};

struct LossBreakdown {
    double recon = 0.0;
    double sparsity = 0.0;
    double wpen = 0.0;
    double total = 0.0;
    double max_recon_norm = 0.0;  // max over the batch of ||u - D(E(u))||
};

/// Full training loss on a batch: mean of per-sample data/sparsity terms
/// plus the parameter penalties.
LossBreakdown eval_loss(const std::vector<const Image*>& batch, const EncoderNet& enc,
                        const DecoderNet& dec, const TrainConfig& cfg);

/// Gradient of eval_loss with respect to every parameter of both nets,
/// assembled from per-sample reverse passes (reduced in sample order) and
/// the analytic penalty terms.
GradMap loss_gradient(const std::vector<const Image*>& batch, const EncoderNet& enc,
                      const DecoderNet& dec, const TrainConfig& cfg,
                      LossBreakdown* breakdown = nullptr);

struct TrainResult {
    EncoderNet encoder;
    DecoderNet decoder;
    TrainTrace trace;
};

/// Mini-batch Adam on the penalized autoencoder loss. Deterministic under
/// a fixed seed: shuffle order, batch assembly and gradient reduction are
/// all seeded and order-fixed.
TrainResult train_on_images(const std::vector<Image>& images, const NetSpec& spec,
                            const TrainConfig& cfg);

/// Loads the train split of a generated dataset directory and trains.
TrainResult train_pair(const std::filesystem::path& dataset_dir, const NetSpec& spec,
                       const TrainConfig& cfg);

}  // namespace desyre
