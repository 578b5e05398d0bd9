#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>

#include "desyre/haar.hpp"
#include "desyre/image.hpp"
#include "desyre/param_store.hpp"
#include "desyre/tape.hpp"

namespace desyre {

/// Encoder/decoder architecture settings. Per downsampling step l the
/// first sequential layer has base_channels * 2^(l-1) channels and the
/// second reduces to latent_channels * 2^(l-1); the fixed orthonormal
/// 2x2 filter bank then splits the features into one low-pass and three
/// high-pass bands at half resolution. The decoder mirrors this with
/// channel-preserving transposed filters, concatenation and two
/// sequential layers per step, ending in a 1x1 convolution with no
/// activation. Sequential layers are convolution + per-channel affine +
/// ReLU.
struct NetSpec {
    int side = 64;
    int levels = 2;
    int base_channels = 16;
    int latent_channels = 2;
    int kernel = 3;

    int seq1_channels(int level) const { return base_channels << (level - 1); }
    int latent_at(int level) const { return latent_channels << (level - 1); }
    PyramidShape pyramid_shape() const;
    void validate() const;
    bool operator==(const NetSpec&) const = default;
};

struct EncoderNet {
    NetSpec spec;
    ParamStore params;  // role kEncoder, names "enc.*"
};

struct DecoderNet {
    NetSpec spec;
    ParamStore params;  // role kDecoder, names "dec.*"
};

/// He-style uniform fan-in initialization, deterministic in the seed.
EncoderNet make_encoder(const NetSpec& spec, std::uint64_t seed);
DecoderNet make_decoder(const NetSpec& spec, std::uint64_t seed);

using LeafMap = std::map<std::string, Tape::Id>;
LeafMap register_params(Tape& tape, const ParamStore& store);

struct PyramidNodes {
    std::vector<std::array<Tape::Id, 3>> detail;
    Tape::Id approx = -1;
};

/// Taped forward passes; shared by inference, training and vjp.
PyramidNodes build_encoder(Tape& tape, const NetSpec& spec, const LeafMap& leaves, Tape::Id input);
Tape::Id build_decoder(Tape& tape, const NetSpec& spec, const LeafMap& leaves,
                       const PyramidNodes& xi);

PyramidNodes register_pyramid(Tape& tape, const CoeffPyramid& xi);
CoeffPyramid pyramid_values(const Tape& tape, const PyramidNodes& nodes, const PyramidShape& shape);

CoeffPyramid encode(const Image& u, const EncoderNet& net);
Image decode(const CoeffPyramid& xi, const DecoderNet& net);

/// J_D(xi)^T cotangent via reverse mode through the decoder tape.
CoeffPyramid decoder_vjp(const CoeffPyramid& xi, const DecoderNet& net, const Image& cotangent);

/// Spectral norm of one zero-padded convolution at the given input
/// extents, via power iteration on the conv/conv-transpose pair.
double conv_operator_norm(const Tensor& kernel, int input_h, int input_w);

/// Upper bound on Lip(D): product of per-convolution spectral norms
/// (power iteration at the layer's runtime extents) and per-affine
/// max |scale|. ReLU and the fixed orthonormal resampling contribute 1.
double lipschitz_bound(const DecoderNet& net);

/// Checkpoint = one DSR1 file holding both parameter stores plus a
/// textual spec manifest at <path>.spec.txt.
void save_checkpoint(const std::filesystem::path& path, const EncoderNet& enc,
                     const DecoderNet& dec);
std::pair<EncoderNet, DecoderNet> load_checkpoint(const std::filesystem::path& path);

}  // namespace desyre
