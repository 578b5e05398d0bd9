#include "desyre/tape.hpp"

#include <algorithm>
#include <cmath>

namespace desyre {

namespace {

void require(bool cond, const std::string& prim, const std::string& msg) {
    if (!cond) throw ShapeError(prim + ": " + msg);
}

std::string two_shapes(const Tensor& a, const Tensor& b) {
    return shape_str(a.shape) + " vs " + shape_str(b.shape);
}
}  // namespace

// Separable 2x2 orthonormal Haar taps; each filter has unit l2 norm and the
// four filters are mutually orthogonal, so the stride-2 bank is orthogonal.
const double Tape::kHaarFilters[4][2][2] = {
    {{0.5, 0.5}, {0.5, 0.5}},     // LL
    {{0.5, -0.5}, {0.5, -0.5}},   // HL: highpass along x
    {{0.5, 0.5}, {-0.5, -0.5}},   // LH: highpass along y
    {{0.5, -0.5}, {-0.5, 0.5}},   // HH
};

Tape::Id Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<Id>(nodes_.size() - 1);
}

void Tape::check_id(Id id, const char* prim) const {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size())
        throw std::invalid_argument(std::string(prim) + ": invalid tape id");
}

bool Tape::is_leaf(Id id) const {
    check_id(id, "is_leaf");
    return nodes_[static_cast<std::size_t>(id)].op == Op::kLeaf;
}

Tape::Id Tape::leaf(Tensor value) {
    return push({Op::kLeaf, {}, std::move(value)});
}

namespace {

// out[co,:,:] += w * shifted x[ci,:,:], shift (dy,dx), zero extension.
inline void accumulate_shifted(double* out, const double* in, int h, int w, int dy, int dx,
                               double weight) {
    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
    for (int y = y0; y < y1; ++y) {
        double* orow = out + static_cast<std::size_t>(y) * w + x0;
        const double* irow = in + static_cast<std::size_t>(y + dy) * w + (x0 + dx);
        for (int i = 0; i < x1 - x0; ++i) orow[i] += weight * irow[i];
    }
}

// sum over valid region of a[:, y, x] * b[:, y+dy, x+dx]
inline double dot_shifted(const double* a, const double* b, int h, int w, int dy, int dx) {
    const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
    const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
    double acc = 0.0;
    for (int y = y0; y < y1; ++y) {
        const double* ar = a + static_cast<std::size_t>(y) * w + x0;
        const double* br = b + static_cast<std::size_t>(y + dy) * w + (x0 + dx);
        for (int i = 0; i < x1 - x0; ++i) acc += ar[i] * br[i];
    }
    return acc;
}

void conv2d_forward(const Tensor& x, const Tensor& k, const double* bias, Tensor& out) {
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int cout = k.dim(0), kh = k.dim(2), kw = k.dim(3);
    const int py = kh / 2, px = kw / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int co = 0; co < cout; ++co) {
        double* op = out.data.data() + co * plane;
        const double b = bias ? bias[co] : 0.0;
        std::fill(op, op + plane, b);
        for (int ci = 0; ci < cin; ++ci) {
            const double* ip = x.data.data() + ci * plane;
            const double* kp = k.data.data() + ((static_cast<std::size_t>(co) * cin + ci) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx)
                    accumulate_shifted(op, ip, h, w, ky - py, kx - px, kp[ky * kw + kx]);
        }
    }
}

// z[ci] = sum_co k[co,ci] correlated against y with flipped offsets; the
// exact transpose of conv2d_forward's matrix.
void conv2d_transpose_forward(const Tensor& y, const Tensor& k, Tensor& out) {
    const int cout = y.dim(0), h = y.dim(1), w = y.dim(2);
    const int cin = k.dim(1), kh = k.dim(2), kw = k.dim(3);
    const int py = kh / 2, px = kw / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    std::fill(out.data.begin(), out.data.end(), 0.0);
    for (int ci = 0; ci < cin; ++ci) {
        double* op = out.data.data() + ci * plane;
        for (int co = 0; co < cout; ++co) {
            const double* ip = y.data.data() + co * plane;
            const double* kp = k.data.data() + ((static_cast<std::size_t>(co) * cin + ci) * kh) * kw;
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx)
                    accumulate_shifted(op, ip, h, w, -(ky - py), -(kx - px), kp[ky * kw + kx]);
        }
    }
}

void conv2d_kernel_grad(const Tensor& x, const Tensor& gy, Tensor& gk) {
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int cout = gy.dim(0), kh = gk.dim(2), kw = gk.dim(3);
    const int py = kh / 2, px = kw / 2;
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (int co = 0; co < cout; ++co)
        for (int ci = 0; ci < cin; ++ci) {
            double* gkp = gk.data.data() + ((static_cast<std::size_t>(co) * cin + ci) * kh) * kw;
            const double* gyp = gy.data.data() + co * plane;
            const double* xp = x.data.data() + ci * plane;
            for (int ky = 0; ky < kh; ++ky)
                for (int kx = 0; kx < kw; ++kx)
                    gkp[ky * kw + kx] += dot_shifted(gyp, xp, h, w, ky - py, kx - px);
        }
}

}  // namespace

Tape::Id Tape::conv2d(Id x, Id kernel, std::optional<Id> bias) {
    check_id(x, "conv2d");
    check_id(kernel, "conv2d");
    const Tensor& xv = val(x);
    const Tensor& kv = val(kernel);
    require(xv.rank() == 3, "conv2d", "input must be [C,H,W], got " + shape_str(xv.shape));
    require(kv.rank() == 4, "conv2d", "kernel must be [Cout,Cin,kh,kw], got " + shape_str(kv.shape));
    require(kv.dim(1) == xv.dim(0), "conv2d",
            "kernel input channels mismatch: " + two_shapes(xv, kv));
    require(kv.dim(2) % 2 == 1 && kv.dim(3) % 2 == 1, "conv2d",
            "kernel extents must be odd, got " + shape_str(kv.shape));
    const double* bptr = nullptr;
    std::vector<Id> in = {x, kernel};
    if (bias) {
        check_id(*bias, "conv2d");
        const Tensor& bv = val(*bias);
        require(bv.rank() == 1 && bv.dim(0) == kv.dim(0), "conv2d",
                "bias must be [Cout]: " + two_shapes(bv, kv));
        bptr = bv.data.data();
        in.push_back(*bias);
    }
    Tensor out = Tensor::zeros({kv.dim(0), xv.dim(1), xv.dim(2)});
    conv2d_forward(xv, kv, bptr, out);
    return push({Op::kConv2d, std::move(in), std::move(out)});
}

Tape::Id Tape::conv2d_transpose(Id y, Id kernel) {
    check_id(y, "conv2d-transpose");
    check_id(kernel, "conv2d-transpose");
    const Tensor& yv = val(y);
    const Tensor& kv = val(kernel);
    require(yv.rank() == 3, "conv2d-transpose", "input must be [C,H,W], got " + shape_str(yv.shape));
    require(kv.rank() == 4, "conv2d-transpose",
            "kernel must be [Cout,Cin,kh,kw], got " + shape_str(kv.shape));
    require(kv.dim(0) == yv.dim(0), "conv2d-transpose",
            "kernel output channels mismatch: " + two_shapes(yv, kv));
    require(kv.dim(2) % 2 == 1 && kv.dim(3) % 2 == 1, "conv2d-transpose",
            "kernel extents must be odd, got " + shape_str(kv.shape));
    Tensor out = Tensor::zeros({kv.dim(1), yv.dim(1), yv.dim(2)});
    conv2d_transpose_forward(yv, kv, out);
    return push({Op::kConvT2d, {y, kernel}, std::move(out)});
}

Tape::Id Tape::relu(Id x) {
    check_id(x, "relu");
    Tensor out = val(x);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push({Op::kRelu, {x}, std::move(out)});
}

Tape::Id Tape::affine_channels(Id x, Id scale_id, Id shift_id) {
    check_id(x, "affine-per-channel");
    check_id(scale_id, "affine-per-channel");
    check_id(shift_id, "affine-per-channel");
    const Tensor& xv = val(x);
    const Tensor& sv = val(scale_id);
    const Tensor& bv = val(shift_id);
    require(xv.rank() == 3, "affine-per-channel", "input must be [C,H,W], got " + shape_str(xv.shape));
    require(sv.rank() == 1 && sv.dim(0) == xv.dim(0), "affine-per-channel",
            "scale must be [C]: " + two_shapes(sv, xv));
    require(bv.rank() == 1 && bv.dim(0) == xv.dim(0), "affine-per-channel",
            "shift must be [C]: " + two_shapes(bv, xv));
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out = Tensor::zeros(xv.shape);
    for (int c = 0; c < xv.dim(0); ++c) {
        const double s = sv.data[static_cast<std::size_t>(c)];
        const double b = bv.data[static_cast<std::size_t>(c)];
        const double* ip = xv.data.data() + c * plane;
        double* op = out.data.data() + c * plane;
        for (std::size_t i = 0; i < plane; ++i) op[i] = s * ip[i] + b;
    }
    return push({Op::kAffineCh, {x, scale_id, shift_id}, std::move(out)});
}

Tape::Id Tape::add(Id a, Id b) {
    check_id(a, "add");
    check_id(b, "add");
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    require(av.same_shape(bv), "add", "operand shapes differ: " + two_shapes(av, bv));
    Tensor out = av;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
    return push({Op::kAdd, {a, b}, std::move(out)});
}

Tape::Id Tape::concat_channels(const std::vector<Id>& xs) {
    require(!xs.empty(), "concat-channels", "needs at least one input");
    int ch = 0;
    for (Id id : xs) {
        check_id(id, "concat-channels");
        const Tensor& v = val(id);
        require(v.rank() == 3, "concat-channels", "inputs must be [C,H,W], got " + shape_str(v.shape));
        require(v.dim(1) == val(xs[0]).dim(1) && v.dim(2) == val(xs[0]).dim(2), "concat-channels",
                "spatial extents differ: " + two_shapes(v, val(xs[0])));
        ch += v.dim(0);
    }
    Tensor out = Tensor::zeros({ch, val(xs[0]).dim(1), val(xs[0]).dim(2)});
    std::size_t off = 0;
    for (Id id : xs) {
        const Tensor& v = val(id);
        std::copy(v.data.begin(), v.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
        off += v.data.size();
    }
    return push({Op::kConcatCh, xs, std::move(out)});
}

Tape::Id Tape::slice_channels(Id x, int from, int count) {
    check_id(x, "slice-channels");
    const Tensor& xv = val(x);
    require(xv.rank() == 3, "slice-channels", "input must be [C,H,W], got " + shape_str(xv.shape));
    require(from >= 0 && count > 0 && from + count <= xv.dim(0), "slice-channels",
            "range [" + std::to_string(from) + "," + std::to_string(from + count) +
                ") out of bounds for " + shape_str(xv.shape));
    const std::size_t plane = static_cast<std::size_t>(xv.dim(1)) * xv.dim(2);
    Tensor out = Tensor::zeros({count, xv.dim(1), xv.dim(2)});
    std::copy(xv.data.begin() + static_cast<std::ptrdiff_t>(from * plane),
              xv.data.begin() + static_cast<std::ptrdiff_t>((from + count) * plane),
              out.data.begin());
    Node n{Op::kSliceCh, {x}, std::move(out)};
    n.a0 = from;
    n.a1 = count;
    return push(std::move(n));
}

Tape::Id Tape::haar_down2(Id x) {
    check_id(x, "subsample-by-2-with-fixed-filter");
    const Tensor& xv = val(x);
    require(xv.rank() == 3, "subsample-by-2-with-fixed-filter",
            "input must be [C,H,W], got " + shape_str(xv.shape));
    require(xv.dim(1) % 2 == 0 && xv.dim(2) % 2 == 0, "subsample-by-2-with-fixed-filter",
            "spatial extents must be even, got " + shape_str(xv.shape));
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    const int oh = h / 2, ow = w / 2;
    Tensor out = Tensor::zeros({4 * c, oh, ow});
    for (int band = 0; band < 4; ++band)
        for (int ci = 0; ci < c; ++ci) {
            const double* ip = xv.data.data() + static_cast<std::size_t>(ci) * h * w;
            double* op = out.data.data() + static_cast<std::size_t>(band * c + ci) * oh * ow;
            for (int i = 0; i < oh; ++i)
                for (int j = 0; j < ow; ++j) {
                    const double* b0 = ip + static_cast<std::size_t>(2 * i) * w + 2 * j;
                    const double* b1 = b0 + w;
                    op[i * ow + j] = kHaarFilters[band][0][0] * b0[0] + kHaarFilters[band][0][1] * b0[1] +
                                     kHaarFilters[band][1][0] * b1[0] + kHaarFilters[band][1][1] * b1[1];
                }
        }
    return push({Op::kHaarDown2, {x}, std::move(out)});
}

Tape::Id Tape::haar_band_up2(Id x, int band) {
    check_id(x, "upsample-by-2-with-fixed-filter");
    require(band >= 0 && band < 4, "upsample-by-2-with-fixed-filter",
            "band must be in [0,4), got " + std::to_string(band));
    const Tensor& xv = val(x);
    require(xv.rank() == 3, "upsample-by-2-with-fixed-filter",
            "input must be [C,h,w], got " + shape_str(xv.shape));
    const int c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
    Tensor out = Tensor::zeros({c, 2 * h, 2 * w});
    for (int ci = 0; ci < c; ++ci) {
        const double* ip = xv.data.data() + static_cast<std::size_t>(ci) * h * w;
        double* op = out.data.data() + static_cast<std::size_t>(ci) * 4 * h * w;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                const double v = ip[i * w + j];
                double* b0 = op + static_cast<std::size_t>(2 * i) * (2 * w) + 2 * j;
                double* b1 = b0 + 2 * w;
                b0[0] += kHaarFilters[band][0][0] * v;
                b0[1] += kHaarFilters[band][0][1] * v;
                b1[0] += kHaarFilters[band][1][0] * v;
                b1[1] += kHaarFilters[band][1][1] * v;
            }
    }
    Node n{Op::kHaarBandUp2, {x}, std::move(out)};
    n.a0 = band;
    return push(std::move(n));
}

Tape::Id Tape::scale(Id x, double c) {
    check_id(x, "scalar-scale");
    Tensor out = val(x);
    for (double& v : out.data) v *= c;
    Node n{Op::kScale, {x}, std::move(out)};
    n.c = c;
    return push(std::move(n));
}

Tape::Id Tape::sum(Id x) {
    check_id(x, "sum");
    double s = 0.0;
    for (double v : val(x).data) s += v;
    return push({Op::kSum, {x}, Tensor::scalar(s)});
}

Tape::Id Tape::sum_abs_weighted(Id x, double weight) {
    check_id(x, "sum-abs-weighted");
    double s = 0.0;
    for (double v : val(x).data) s += std::abs(v);
    Node n{Op::kSumAbs, {x}, Tensor::scalar(weight * s)};
    n.c = weight;
    return push(std::move(n));
}

Tape::Id Tape::sum_squares(Id x) {
    check_id(x, "sum-squares");
    double s = 0.0;
    for (double v : val(x).data) s += v * v;
    return push({Op::kSumSquares, {x}, Tensor::scalar(s)});
}

std::vector<Tensor> Tape::backward(Id output, const Tensor& seed,
                                   const std::vector<Id>* wanted) const {
    if (nodes_.empty()) throw std::invalid_argument("backward: tape is empty");
    check_id(output, "backward");
    const Tensor& out_val = val(output);
    if (!(seed.shape == out_val.shape))
        throw ShapeError("backward: seed shape " + shape_str(seed.shape) +
                         " does not match output shape " + shape_str(out_val.shape));

    // reach[i]: a wanted node is reachable from node i going leafward;
    // gradient flow into unreachable subgraphs is pure waste.
    std::vector<char> reach(nodes_.size(), wanted == nullptr ? 1 : 0);
    if (wanted != nullptr) {
        for (Id id : *wanted) {
            check_id(id, "backward");
            reach[static_cast<std::size_t>(id)] = 1;
        }
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            for (Id in_id : nodes_[i].in)
                if (reach[static_cast<std::size_t>(in_id)]) {
                    reach[i] = 1;
                    break;
                }
    }

    std::vector<Tensor> grads(nodes_.size());
    grads[static_cast<std::size_t>(output)] = seed;

    auto acc = [&grads, this](Id id) -> Tensor& {
        Tensor& g = grads[static_cast<std::size_t>(id)];
        if (g.data.empty()) g = Tensor::zeros(val(id).shape);
        return g;
    };
    auto skip = [&reach](Id id) { return reach[static_cast<std::size_t>(id)] == 0; };

    for (Id id = output; id >= 0; --id) {
        const Node& n = nodes_[static_cast<std::size_t>(id)];
        const Tensor& g = grads[static_cast<std::size_t>(id)];
        if (g.data.empty()) continue;  // node not on a path to the output
        if (skip(id)) continue;
        switch (n.op) {
            case Op::kLeaf:
                break;
            case Op::kConv2d: {
                const Tensor& x = val(n.in[0]);
                const Tensor& k = val(n.in[1]);
                if (!skip(n.in[0])) {
                    Tensor tmp = Tensor::zeros(x.shape);
                    conv2d_transpose_forward(g, k, tmp);
                    Tensor& gx = acc(n.in[0]);
                    for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += tmp.data[i];
                }
                if (!skip(n.in[1])) conv2d_kernel_grad(x, g, acc(n.in[1]));
                if (n.in.size() > 2 && !skip(n.in[2])) {
                    Tensor& gb = acc(n.in[2]);
                    const std::size_t plane = g.data.size() / static_cast<std::size_t>(g.dim(0));
                    for (int co = 0; co < g.dim(0); ++co) {
                        double s = 0.0;
                        const double* gp = g.data.data() + co * plane;
                        for (std::size_t i = 0; i < plane; ++i) s += gp[i];
                        gb.data[static_cast<std::size_t>(co)] += s;
                    }
                }
                break;
            }
            case Op::kConvT2d: {
                const Tensor& y = val(n.in[0]);
                const Tensor& k = val(n.in[1]);
                if (!skip(n.in[0])) {
                    // d/dy: conv2d of the incoming gradient with the same kernel.
                    Tensor tmp = Tensor::zeros(y.shape);
                    conv2d_forward(g, k, nullptr, tmp);
                    Tensor& gy = acc(n.in[0]);
                    for (std::size_t i = 0; i < gy.data.size(); ++i) gy.data[i] += tmp.data[i];
                }
                // d/dk: same correlation pattern as conv2d's kernel grad with
                // the roles of input and output gradient exchanged.
                if (!skip(n.in[1])) conv2d_kernel_grad(g, y, acc(n.in[1]));
                break;
            }
            case Op::kRelu: {
                if (skip(n.in[0])) break;
                const Tensor& x = val(n.in[0]);
                Tensor& gx = acc(n.in[0]);
                for (std::size_t i = 0; i < gx.data.size(); ++i)
                    gx.data[i] += x.data[i] > 0.0 ? g.data[i] : 0.0;
                break;
            }
            case Op::kAffineCh: {
                const Tensor& x = val(n.in[0]);
                const Tensor& s = val(n.in[1]);
                const bool want_x = !skip(n.in[0]);
                const bool want_aff = !skip(n.in[1]) || !skip(n.in[2]);
                const std::size_t plane = x.data.size() / static_cast<std::size_t>(x.dim(0));
                for (int c = 0; c < x.dim(0); ++c) {
                    const double sc = s.data[static_cast<std::size_t>(c)];
                    double ds = 0.0, db = 0.0;
                    const double* xp = x.data.data() + c * plane;
                    const double* gp = g.data.data() + c * plane;
                    if (want_x) {
                        double* gxp = acc(n.in[0]).data.data() + c * plane;
                        for (std::size_t i = 0; i < plane; ++i) gxp[i] += sc * gp[i];
                    }
                    if (want_aff) {
                        for (std::size_t i = 0; i < plane; ++i) {
                            ds += gp[i] * xp[i];
                            db += gp[i];
                        }
                        if (!skip(n.in[1])) acc(n.in[1]).data[static_cast<std::size_t>(c)] += ds;
                        if (!skip(n.in[2])) acc(n.in[2]).data[static_cast<std::size_t>(c)] += db;
                    }
                }
                break;
            }
            case Op::kAdd: {
                if (!skip(n.in[0])) {
                    Tensor& ga = acc(n.in[0]);
                    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] += g.data[i];
                }
                if (!skip(n.in[1])) {
                    Tensor& gb = acc(n.in[1]);
                    for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] += g.data[i];
                }
                break;
            }
            case Op::kConcatCh: {
                std::size_t off = 0;
                for (Id in_id : n.in) {
                    const std::size_t len = val(in_id).data.size();
                    if (!skip(in_id)) {
                        Tensor& gi = acc(in_id);
                        for (std::size_t i = 0; i < len; ++i) gi.data[i] += g.data[off + i];
                    }
                    off += len;
                }
                break;
            }
            case Op::kSliceCh: {
                if (skip(n.in[0])) break;
                const Tensor& x = val(n.in[0]);
                Tensor& gx = acc(n.in[0]);
                const std::size_t plane =
                    static_cast<std::size_t>(x.dim(1)) * static_cast<std::size_t>(x.dim(2));
                const std::size_t off = static_cast<std::size_t>(n.a0) * plane;
                for (std::size_t i = 0; i < g.data.size(); ++i) gx.data[off + i] += g.data[i];
                break;
            }
            case Op::kHaarDown2: {
                if (skip(n.in[0])) break;
                const Tensor& x = val(n.in[0]);
                Tensor& gx = acc(n.in[0]);
                const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
                const int oh = h / 2, ow = w / 2;
                for (int band = 0; band < 4; ++band)
                    for (int ci = 0; ci < c; ++ci) {
                        const double* gp =
                            g.data.data() + static_cast<std::size_t>(band * c + ci) * oh * ow;
                        double* gxp = gx.data.data() + static_cast<std::size_t>(ci) * h * w;
                        for (int i = 0; i < oh; ++i)
                            for (int j = 0; j < ow; ++j) {
                                const double v = gp[i * ow + j];
                                double* b0 = gxp + static_cast<std::size_t>(2 * i) * w + 2 * j;
                                double* b1 = b0 + w;
                                b0[0] += kHaarFilters[band][0][0] * v;
                                b0[1] += kHaarFilters[band][0][1] * v;
                                b1[0] += kHaarFilters[band][1][0] * v;
                                b1[1] += kHaarFilters[band][1][1] * v;
                            }
                    }
                break;
            }
            case Op::kHaarBandUp2: {
                if (skip(n.in[0])) break;
                const Tensor& x = val(n.in[0]);
                Tensor& gx = acc(n.in[0]);
                const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
                const int band = n.a0;
                for (int ci = 0; ci < c; ++ci) {
                    double* gxp = gx.data.data() + static_cast<std::size_t>(ci) * h * w;
                    const double* gp = g.data.data() + static_cast<std::size_t>(ci) * 4 * h * w;
                    for (int i = 0; i < h; ++i)
                        for (int j = 0; j < w; ++j) {
                            const double* b0 = gp + static_cast<std::size_t>(2 * i) * (2 * w) + 2 * j;
                            const double* b1 = b0 + 2 * w;
                            gxp[i * w + j] += kHaarFilters[band][0][0] * b0[0] +
                                              kHaarFilters[band][0][1] * b0[1] +
                                              kHaarFilters[band][1][0] * b1[0] +
                                              kHaarFilters[band][1][1] * b1[1];
                        }
                }
                break;
            }
            case Op::kScale: {
                if (skip(n.in[0])) break;
                Tensor& gx = acc(n.in[0]);
                for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += n.c * g.data[i];
                break;
            }
            case Op::kSum: {
                if (skip(n.in[0])) break;
                Tensor& gx = acc(n.in[0]);
                const double s = g.data[0];
                for (double& v : gx.data) v += s;
                break;
            }
            case Op::kSumAbs: {
                if (skip(n.in[0])) break;
                const Tensor& x = val(n.in[0]);
                Tensor& gx = acc(n.in[0]);
                const double s = n.c * g.data[0];
                for (std::size_t i = 0; i < gx.data.size(); ++i) {
                    const double xi = x.data[i];
                    gx.data[i] += xi > 0.0 ? s : (xi < 0.0 ? -s : 0.0);
                }
                break;
            }
            case Op::kSumSquares: {
                if (skip(n.in[0])) break;
                const Tensor& x = val(n.in[0]);
                Tensor& gx = acc(n.in[0]);
                const double s = 2.0 * g.data[0];
                for (std::size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += s * x.data[i];
                break;
            }
        }
    }

    // Unreached leaves report zero gradients.
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i].op == Op::kLeaf && grads[i].data.empty())
            grads[i] = Tensor::zeros(nodes_[i].value.shape);
    return grads;
}

}  // namespace desyre
