#pragma once

#include <optional>
#include <string>
#include <vector>

#include "desyre/tensor.hpp"

namespace desyre {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Reverse-mode autodiff over a recorded list of primitive operations.
///
/// Every operation appends one node holding its output value, the ids of
/// its operands and the context needed to apply the chain rule backward.
/// Node ids grow in execution order, so a single reverse sweep visits each
/// node after all of its consumers. Gradient accumulation is additive and
/// follows tape order, which makes backward results bit-reproducible.
///
/// The primitive set is exactly what the encoder/decoder networks and the
/// training loss need; there is no broadcasting.
class Tape {
  public:
    using Id = int;

    Id leaf(Tensor value);

    /// 2-D convolution, stride 1, zero padding, odd kernel extents.
    /// x: [Cin,H,W], kernel: [Cout,Cin,kh,kw], optional bias [Cout].
    Id conv2d(Id x, Id kernel, std::optional<Id> bias = std::nullopt);

    /// Exact algebraic adjoint of conv2d in its input argument.
    /// y: [Cout,H,W], kernel: [Cout,Cin,kh,kw] -> [Cin,H,W].
    Id conv2d_transpose(Id y, Id kernel);

    Id relu(Id x);

    /// Per-channel y = scale[c] * x + shift[c]; x: [C,H,W].
    Id affine_channels(Id x, Id scale, Id shift);

    Id add(Id a, Id b);

    Id concat_channels(const std::vector<Id>& xs);
    Id slice_channels(Id x, int from, int count);

    /// Orthonormal 2x2 Haar filter bank, stride 2. [C,H,W] -> [4C,H/2,W/2]
    /// with channel groups in band order LL, HL, LH, HH. The map is
    /// orthogonal: its adjoint equals its inverse.
    Id haar_down2(Id x);

    /// Transposed single-band Haar filter, channel-preserving upsampling:
    /// [C,h,w] -> [C,2h,2w]. band indexes LL=0, HL=1, LH=2, HH=3.
    Id haar_band_up2(Id x, int band);

    Id scale(Id x, double c);
    Id sum(Id x);
    Id sum_abs_weighted(Id x, double weight);
    Id sum_squares(Id x);

    const Tensor& value(Id id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }
    std::size_t size() const { return nodes_.size(); }
    bool is_leaf(Id id) const;

    /// Gradient of <seed, node(output)> with respect to every node,
    /// indexed by id. Leaves not reached from the output get zeros. When
    /// `wanted` is given, gradient flow into subgraphs that cannot reach a
    /// wanted node is skipped (their entries stay zero); vector-Jacobian
    /// products against a few inputs avoid paying for parameter
    /// gradients this way.
    std::vector<Tensor> backward(Id output, const Tensor& seed,
                                 const std::vector<Id>* wanted = nullptr) const;

    static const double kHaarFilters[4][2][2];

  private:
    enum class Op {
        kLeaf,
        kConv2d,
        kConvT2d,
        kRelu,
        kAffineCh,
        kAdd,
        kConcatCh,
        kSliceCh,
        kHaarDown2,
        kHaarBandUp2,
        kScale,
        kSum,
        kSumAbs,
        kSumSquares,
    };

    struct Node {
        Op op;
        std::vector<Id> in;
        Tensor value;
        double c = 0.0;  // scale factor or sum-abs weight
        int a0 = 0;      // slice offset or band index
        int a1 = 0;      // slice count
    };

    Id push(Node n);
    const Tensor& val(Id id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    void check_id(Id id, const char* prim) const;

    std::vector<Node> nodes_;
};

/// Vector-Jacobian product of a taped computation: runs `net` forward from
/// a fresh leaf holding `input`, then pulls `cotangent` back to the input.
template <typename NetFn>
Tensor vjp(NetFn&& net, const Tensor& input, const Tensor& cotangent) {
    Tape tape;
    const Tape::Id in_id = tape.leaf(input);
    const Tape::Id out_id = net(tape, in_id);
    auto grads = tape.backward(out_id, cotangent);
    return grads[static_cast<std::size_t>(in_id)];
}

}  // namespace desyre
