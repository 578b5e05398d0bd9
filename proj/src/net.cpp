#include "desyre/net.hpp"

#include <cmath>

#include "desyre/io.hpp"
#include "desyre/radon.hpp"
#include "desyre/rng.hpp"

namespace desyre {

PyramidShape NetSpec::pyramid_shape() const {
    PyramidShape s;
    s.levels = levels;
    s.image_side = side;
    for (int l = 1; l <= levels; ++l) s.detail_channels.push_back(latent_at(l));
    s.approx_channels = latent_at(levels);
    s.validate();
    return s;
}

void NetSpec::validate() const {
    if (levels < 1) throw std::invalid_argument("NetSpec: levels must be >= 1");
    if (side % (1 << levels) != 0)
        throw std::invalid_argument("NetSpec: side " + std::to_string(side) +
                                    " not divisible by 2^" + std::to_string(levels));
    if (base_channels < 1 || latent_channels < 1)
        throw std::invalid_argument("NetSpec: channel counts must be >= 1");
    if (kernel % 2 != 1 || kernel < 1)
        throw std::invalid_argument("NetSpec: kernel extent must be odd");
}

namespace {

std::string lvl(const char* prefix, int level, const char* layer, const char* part) {
    return std::string(prefix) + ".l" + std::to_string(level) + "." + layer + "." + part;
}

void add_conv_block(ParamStore& store, Rng& rng, const std::string& base, int cin, int cout,
                    int k) {
    const double limit = std::sqrt(6.0 / (static_cast<double>(cin) * k * k));
    Tensor kernel = Tensor::zeros({cout, cin, k, k});
    for (double& v : kernel.data) v = rng.uniform(-limit, limit);
    store.insert(base + ".kernel", std::move(kernel));
    store.insert(base + ".scale", Tensor::full({cout}, 1.0));
    store.insert(base + ".shift", Tensor::zeros({cout}));
}

// decoder seq4 channel count: hands the next finer step its low-pass
// input, so it matches that step's latent width; at the finest step it
// feeds the output head.
int seq4_channels(const NetSpec& spec, int level) {
    return level > 1 ? spec.latent_at(level - 1) : spec.base_channels;
}

}  // namespace

EncoderNet make_encoder(const NetSpec& spec, std::uint64_t seed) {
    spec.validate();
    EncoderNet net;
    net.spec = spec;
    net.params.role = ParamRole::kEncoder;
    Rng rng(Rng::mix(seed, 0xE11C));
    int cin = 1;
    for (int l = 1; l <= spec.levels; ++l) {
        add_conv_block(net.params, rng, "enc.l" + std::to_string(l) + ".seq1", cin,
                       spec.seq1_channels(l), spec.kernel);
        add_conv_block(net.params, rng, "enc.l" + std::to_string(l) + ".seq2",
                       spec.seq1_channels(l), spec.latent_at(l), spec.kernel);
        cin = spec.latent_at(l);
    }
    return net;
}

DecoderNet make_decoder(const NetSpec& spec, std::uint64_t seed) {
    spec.validate();
    DecoderNet net;
    net.spec = spec;
    net.params.role = ParamRole::kDecoder;
    Rng rng(Rng::mix(seed, 0xDEC0));
    for (int l = spec.levels; l >= 1; --l) {
        add_conv_block(net.params, rng, "dec.l" + std::to_string(l) + ".seq3",
                       4 * spec.latent_at(l), spec.seq1_channels(l), spec.kernel);
        add_conv_block(net.params, rng, "dec.l" + std::to_string(l) + ".seq4",
                       spec.seq1_channels(l), seq4_channels(spec, l), spec.kernel);
    }
    const double limit = std::sqrt(6.0 / spec.base_channels);
    Tensor kout = Tensor::zeros({1, spec.base_channels, 1, 1});
    for (double& v : kout.data) v = rng.uniform(-limit, limit);
    net.params.insert("dec.out.kernel", std::move(kout));
    net.params.insert("dec.out.bias", Tensor::zeros({1}));
    return net;
}

LeafMap register_params(Tape& tape, const ParamStore& store) {
    LeafMap leaves;
    for (const auto& [name, t] : store.params) leaves.emplace(name, tape.leaf(t));
    return leaves;
}

namespace {

Tape::Id sequential(Tape& tape, const LeafMap& leaves, const std::string& base, Tape::Id x) {
    const Tape::Id conv = tape.conv2d(x, leaves.at(base + ".kernel"));
    const Tape::Id aff = tape.affine_channels(conv, leaves.at(base + ".scale"),
                                              leaves.at(base + ".shift"));
    return tape.relu(aff);
}

}  // namespace

PyramidNodes build_encoder(Tape& tape, const NetSpec& spec, const LeafMap& leaves, Tape::Id input) {
    const Tensor& in_val = tape.value(input);
    if (in_val.shape != std::vector<int>{1, spec.side, spec.side})
        throw ShapeError("encode: input must be [1," + std::to_string(spec.side) + "," +
                         std::to_string(spec.side) + "], got " + shape_str(in_val.shape));
    PyramidNodes out;
    Tape::Id x = input;
    for (int l = 1; l <= spec.levels; ++l) {
        const std::string base = "enc.l" + std::to_string(l);
        x = sequential(tape, leaves, base + ".seq1", x);
        x = sequential(tape, leaves, base + ".seq2", x);
        const int lat = spec.latent_at(l);
        const Tape::Id bank = tape.haar_down2(x);
        const Tape::Id ll = tape.slice_channels(bank, 0, lat);
        const Tape::Id hl = tape.slice_channels(bank, lat, lat);
        const Tape::Id lh = tape.slice_channels(bank, 2 * lat, lat);
        const Tape::Id hh = tape.slice_channels(bank, 3 * lat, lat);
        out.detail.push_back({hl, lh, hh});
        x = ll;
    }
    out.approx = x;
    return out;
}

Tape::Id build_decoder(Tape& tape, const NetSpec& spec, const LeafMap& leaves,
                       const PyramidNodes& xi) {
    if (static_cast<int>(xi.detail.size()) != spec.levels)
        throw ShapeError("decode: pyramid level count " + std::to_string(xi.detail.size()) +
                         " does not match net levels " + std::to_string(spec.levels));
    const PyramidShape pshape = spec.pyramid_shape();
    for (int l = 1; l <= spec.levels; ++l) {
        const std::vector<int> want{pshape.detail_channels[static_cast<std::size_t>(l - 1)],
                                    pshape.level_side(l), pshape.level_side(l)};
        for (int b = 0; b < 3; ++b) {
            const Tensor& band =
                tape.value(xi.detail[static_cast<std::size_t>(l - 1)][static_cast<std::size_t>(b)]);
            if (band.shape != want)
                throw ShapeError("decode: band shape " + shape_str(band.shape) + " at level " +
                                 std::to_string(l) + " does not match " + shape_str(want));
        }
    }
    {
        const std::vector<int> want{pshape.approx_channels, pshape.level_side(spec.levels),
                                    pshape.level_side(spec.levels)};
        if (tape.value(xi.approx).shape != want)
            throw ShapeError("decode: approximation band shape " +
                             shape_str(tape.value(xi.approx).shape) + " does not match " +
                             shape_str(want));
    }

    Tape::Id g = xi.approx;
    for (int l = spec.levels; l >= 1; --l) {
        const auto& bands = xi.detail[static_cast<std::size_t>(l - 1)];
        const Tape::Id up_ll = tape.haar_band_up2(g, 0);
        const Tape::Id up_hl = tape.haar_band_up2(bands[0], 1);
        const Tape::Id up_lh = tape.haar_band_up2(bands[1], 2);
        const Tape::Id up_hh = tape.haar_band_up2(bands[2], 3);
        Tape::Id x = tape.concat_channels({up_ll, up_hl, up_lh, up_hh});
        const std::string base = "dec.l" + std::to_string(l);
        x = sequential(tape, leaves, base + ".seq3", x);
        g = sequential(tape, leaves, base + ".seq4", x);
    }
    return tape.conv2d(g, leaves.at("dec.out.kernel"), leaves.at("dec.out.bias"));
}

PyramidNodes register_pyramid(Tape& tape, const CoeffPyramid& xi) {
    xi.check_consistent();
    PyramidNodes nodes;
    for (const auto& level : xi.detail)
        nodes.detail.push_back(
            {tape.leaf(level[0]), tape.leaf(level[1]), tape.leaf(level[2])});
    nodes.approx = tape.leaf(xi.approx);
    return nodes;
}

CoeffPyramid pyramid_values(const Tape& tape, const PyramidNodes& nodes,
                            const PyramidShape& shape) {
    CoeffPyramid p = CoeffPyramid::zeros(shape);
    for (std::size_t l = 0; l < nodes.detail.size(); ++l)
        for (std::size_t b = 0; b < 3; ++b) p.detail[l][b] = tape.value(nodes.detail[l][b]);
    p.approx = tape.value(nodes.approx);
    return p;
}

CoeffPyramid encode(const Image& u, const EncoderNet& net) {
    Tape tape;
    const Tape::Id input = tape.leaf(u.to_tensor());
    const LeafMap leaves = register_params(tape, net.params);
    const PyramidNodes nodes = build_encoder(tape, net.spec, leaves, input);
    return pyramid_values(tape, nodes, net.spec.pyramid_shape());
}

Image decode(const CoeffPyramid& xi, const DecoderNet& net) {
    Tape tape;
    const PyramidNodes nodes = register_pyramid(tape, xi);
    const LeafMap leaves = register_params(tape, net.params);
    const Tape::Id out = build_decoder(tape, net.spec, leaves, nodes);
    return Image::from_tensor(tape.value(out));
}

CoeffPyramid decoder_vjp(const CoeffPyramid& xi, const DecoderNet& net, const Image& cotangent) {
    Tape tape;
    const PyramidNodes nodes = register_pyramid(tape, xi);
    const LeafMap leaves = register_params(tape, net.params);
    const Tape::Id out = build_decoder(tape, net.spec, leaves, nodes);
    const auto grads = tape.backward(out, cotangent.to_tensor());
    CoeffPyramid g = CoeffPyramid::zeros(xi.shape);
    for (std::size_t l = 0; l < nodes.detail.size(); ++l)
        for (std::size_t b = 0; b < 3; ++b)
            g.detail[l][b] = grads[static_cast<std::size_t>(nodes.detail[l][b])];
    g.approx = grads[static_cast<std::size_t>(nodes.approx)];
    return g;
}

double conv_operator_norm(const Tensor& kernel, int input_h, int input_w) {
    const int cin = kernel.dim(1);
    auto apply = [&kernel, input_h, input_w](const std::vector<double>& x) {
        Tape tape;
        const Tape::Id xi = tape.leaf(Tensor({kernel.dim(1), input_h, input_w}, x));
        const Tape::Id ki = tape.leaf(kernel);
        return tape.value(tape.conv2d(xi, ki)).data;
    };
    auto adjoint = [&kernel, input_h, input_w](const std::vector<double>& y) {
        Tape tape;
        const Tape::Id yi = tape.leaf(Tensor({kernel.dim(0), input_h, input_w}, y));
        const Tape::Id ki = tape.leaf(kernel);
        return tape.value(tape.conv2d_transpose(yi, ki)).data;
    };
    const auto res = operator_norm(apply, adjoint,
                                   static_cast<std::int64_t>(cin) * input_h * input_w, 200, 1e-11,
                                   0xC07F);
    return res.norm;
}

namespace {

double max_abs(const Tensor& t) {
    double m = 0.0;
    for (double v : t.data) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

double lipschitz_bound(const DecoderNet& net) {
    const NetSpec& spec = net.spec;
    double bound = 1.0;
    for (int l = spec.levels; l >= 1; --l) {
        const int s = spec.side >> (l - 1);
        const std::string base = "dec.l" + std::to_string(l);
        bound *= conv_operator_norm(net.params.at(base + ".seq3.kernel"), s, s);
        bound *= max_abs(net.params.at(base + ".seq3.scale"));
        bound *= conv_operator_norm(net.params.at(base + ".seq4.kernel"), s, s);
        bound *= max_abs(net.params.at(base + ".seq4.scale"));
    }
    bound *= conv_operator_norm(net.params.at("dec.out.kernel"), spec.side, spec.side);
    return bound;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderNet& enc,
                     const DecoderNet& dec) {
    if (!(enc.spec == dec.spec))
        throw std::invalid_argument("save_checkpoint: encoder/decoder specs differ");
    std::vector<std::pair<std::string, Tensor>> tensors;
    for (const auto& [name, t] : enc.params.params) tensors.emplace_back(name, t);
    for (const auto& [name, t] : dec.params.params) tensors.emplace_back(name, t);
    io::write_dsr(path, tensors);
    io::write_manifest(path.string() + ".spec.txt",
                       {{"side", std::to_string(enc.spec.side)},
                        {"levels", std::to_string(enc.spec.levels)},
                        {"base_channels", std::to_string(enc.spec.base_channels)},
                        {"latent_channels", std::to_string(enc.spec.latent_channels)},
                        {"kernel", std::to_string(enc.spec.kernel)}});
}

std::pair<EncoderNet, DecoderNet> load_checkpoint(const std::filesystem::path& path) {
    const auto manifest = io::read_manifest(path.string() + ".spec.txt");
    NetSpec spec;
    spec.side = std::stoi(manifest.at("side"));
    spec.levels = std::stoi(manifest.at("levels"));
    spec.base_channels = std::stoi(manifest.at("base_channels"));
    spec.latent_channels = std::stoi(manifest.at("latent_channels"));
    spec.kernel = std::stoi(manifest.at("kernel"));
    spec.validate();
    EncoderNet enc;
    enc.spec = spec;
    enc.params.role = ParamRole::kEncoder;
    DecoderNet dec;
    dec.spec = spec;
    dec.params.role = ParamRole::kDecoder;
    for (auto& [name, t] : io::read_dsr(path)) {
        if (name.rfind("enc.", 0) == 0)
            enc.params.insert(name, std::move(t));
        else if (name.rfind("dec.", 0) == 0)
            dec.params.insert(name, std::move(t));
        else
            throw std::runtime_error("checkpoint: unexpected tensor name " + name);
    }
    return {std::move(enc), std::move(dec)};
}

}  // namespace desyre
