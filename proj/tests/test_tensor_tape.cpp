#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>

#include "desyre/io.hpp"
#include "desyre/param_store.hpp"
#include "desyre/rng.hpp"
#include "desyre/tape.hpp"

using namespace desyre;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

// Independent naive convolution used as the summation oracle.
double conv_oracle_at(const Tensor& x, const Tensor& k, int co, int oy, int ox) {
    const int cin = x.dim(0), h = x.dim(1), w = x.dim(2);
    const int kh = k.dim(2), kw = k.dim(3);
    double acc = 0.0;
    for (int ci = 0; ci < cin; ++ci)
        for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy + ky - kh / 2, ix = ox + kx - kw / 2;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += k.data[((static_cast<std::size_t>(co) * cin + ci) * kh + ky) * kw + kx] *
                       x.data[(static_cast<std::size_t>(ci) * h + iy) * w + ix];
            }
    return acc;
}

using GraphBuilder = std::function<Tape::Id(Tape&, const std::vector<Tape::Id>&)>;

double eval_graph(const GraphBuilder& build, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Tape::Id> ids;
    for (const Tensor& t : inputs) ids.push_back(tape.leaf(t));
    const Tape::Id out = build(tape, ids);
    double s = 0.0;  // generic scalar head: sum of outputs
    for (double v : tape.value(out).data) s += v;
    return s;
}

// Central finite differences with step 1e-4 against the reverse pass.
void check_gradients(const GraphBuilder& build, std::vector<Tensor> inputs,
                     double rel_tol = 1e-5) {
    Tape tape;
    std::vector<Tape::Id> ids;
    for (const Tensor& t : inputs) ids.push_back(tape.leaf(t));
    const Tape::Id out = build(tape, ids);
    const Tensor seed = Tensor::full(tape.value(out).shape, 1.0);
    const auto grads = tape.backward(out, seed);

    const double h = 1e-4;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < inputs[i].data.size(); ++j) {
            const double orig = inputs[i].data[j];
            inputs[i].data[j] = orig + h;
            const double fp = eval_graph(build, inputs);
            inputs[i].data[j] = orig - h;
            const double fm = eval_graph(build, inputs);
            inputs[i].data[j] = orig;
            const double fd = (fp - fm) / (2.0 * h);
            const double ad = grads[static_cast<std::size_t>(ids[i])].data[j];
            const double denom = std::max({std::abs(fd), std::abs(ad), 1e-4});
            INFO("input ", i, " component ", j, " ad=", ad, " fd=", fd);
            CHECK(std::abs(ad - fd) / denom < rel_tol);
        }
    }
}

}  // namespace

TEST_CASE("relu forward matches definition") {
    Tape tape;
    const auto x = tape.leaf(Tensor({1, 1, 3}, {-1.0, 0.0, 2.0}));
    const auto y = tape.relu(x);
    CHECK(tape.value(y).data == std::vector<double>{0.0, 0.0, 2.0});
}

TEST_CASE("conv2d with the 1x1 identity kernel reproduces the image") {
    Rng rng(3);
    const Tensor img = random_tensor({1, 5, 4}, rng);
    Tape tape;
    const auto x = tape.leaf(img);
    const auto k = tape.leaf(Tensor({1, 1, 1, 1}, {1.0}));
    const auto y = tape.conv2d(x, k);
    CHECK(tape.value(y).data == img.data);
}

TEST_CASE("conv2d of a constant image with an all-ones 3x3 kernel") {
    Tape tape;
    const auto x = tape.leaf(Tensor::full({1, 4, 4}, 1.0));
    const auto k = tape.leaf(Tensor::full({1, 1, 3, 3}, 1.0));
    const auto y = tape.conv2d(x, k);
    // center pixel sums the full 3x3 neighborhood
    CHECK(tape.value(y).data[1 * 4 + 1] == doctest::Approx(9.0).epsilon(1e-14));
    // every sample matches the direct summation oracle
    Rng rng(11);
    const Tensor xr = random_tensor({2, 4, 4}, rng);
    const Tensor kr = random_tensor({3, 2, 3, 3}, rng);
    Tape t2;
    const auto y2 = t2.conv2d(t2.leaf(xr), t2.leaf(kr));
    for (int co = 0; co < 3; ++co)
        for (int oy = 0; oy < 4; ++oy)
            for (int ox = 0; ox < 4; ++ox)
                CHECK(t2.value(y2).data[(static_cast<std::size_t>(co) * 4 + oy) * 4 + ox] ==
                      doctest::Approx(conv_oracle_at(xr, kr, co, oy, ox)).epsilon(1e-12));
}

TEST_CASE("shape mismatches are rejected with the primitive named") {
    Tape tape;
    const auto x = tape.leaf(Tensor::zeros({2, 4, 4}));
    const auto k = tape.leaf(Tensor::zeros({1, 3, 3, 3}));
    CHECK_THROWS_WITH_AS(tape.conv2d(x, k),
                         doctest::Contains("conv2d: kernel input channels mismatch"), ShapeError);
    const auto a = tape.leaf(Tensor::zeros({1, 2, 2}));
    CHECK_THROWS_AS(tape.add(x, a), ShapeError);
}

TEST_CASE("backward basics") {
    SUBCASE("sum of squares at x = 3 has gradient 6") {
        Tape tape;
        const auto x = tape.leaf(Tensor({1}, {3.0}));
        const auto y = tape.sum_squares(x);
        const auto grads = tape.backward(y, Tensor::scalar(1.0));
        CHECK(grads[static_cast<std::size_t>(x)].data[0] == doctest::Approx(6.0));
    }
    SUBCASE("zero map has zero gradient") {
        Tape tape;
        const auto x = tape.leaf(Tensor({1, 2, 2}, {1.0, -2.0, 3.0, 4.0}));
        const auto y = tape.sum(tape.scale(x, 0.0));
        const auto grads = tape.backward(y, Tensor::scalar(1.0));
        for (double g : grads[static_cast<std::size_t>(x)].data) CHECK(g == 0.0);
    }
    SUBCASE("empty tape is rejected") {
        Tape tape;
        CHECK_THROWS_AS(tape.backward(0, Tensor::scalar(1.0)), std::invalid_argument);
    }
    SUBCASE("unreached leaves get zero gradients") {
        Tape tape;
        const auto x = tape.leaf(Tensor({2}, {1.0, 2.0}));
        const auto other = tape.leaf(Tensor({3}, {1.0, 1.0, 1.0}));
        const auto y = tape.sum_squares(x);
        const auto grads = tape.backward(y, Tensor::scalar(1.0));
        REQUIRE(grads[static_cast<std::size_t>(other)].data.size() == 3);
        for (double g : grads[static_cast<std::size_t>(other)].data) CHECK(g == 0.0);
    }
}

TEST_CASE("finite-difference gradient check for every primitive") {
    Rng rng(42);
    SUBCASE("conv2d with bias") {
        check_gradients(
            [](Tape& t, const std::vector<Tape::Id>& in) {
                return t.sum_squares(t.conv2d(in[0], in[1], in[2]));
            },
            {random_tensor({2, 4, 4}, rng), random_tensor({3, 2, 3, 3}, rng),
             random_tensor({3}, rng)});
    }
    SUBCASE("conv2d-transpose") {
        check_gradients(
            [](Tape& t, const std::vector<Tape::Id>& in) {
                return t.sum_squares(t.conv2d_transpose(in[0], in[1]));
            },
            {random_tensor({3, 4, 4}, rng), random_tensor({3, 2, 3, 3}, rng)});
    }
    SUBCASE("relu away from the kink") {
        Tensor x = random_tensor({1, 3, 3}, rng);
        for (double& v : x.data) v += v >= 0.0 ? 0.25 : -0.25;
        check_gradients(
            [](Tape& t, const std::vector<Tape::Id>& in) { return t.sum_squares(t.relu(in[0])); },
            {x});
    }
    SUBCASE("affine-per-channel") {
        check_gradients(
            [](Tape& t, const std::vector<Tape::Id>& in) {
                return t.sum_squares(t.affine_channels(in[0], in[1], in[2]));
            },
            {random_tensor({2, 3, 3}, rng), random_tensor({2}, rng), random_tensor({2}, rng)});
    }
    SUBCASE("add, concat, slice") {
        check_gradients(
            [](Tape& t, const std::vector<Tape::Id>& in) {
                const auto c = t.concat_channels({t.add(in[0], in[1]), in[2]});
                return t.sum_squares(t.slice_channels(c, 1, 2));
            },
            {random_tensor({2, 3, 3}, rng), random_tensor({2, 3, 3}, rng),
             random_tensor({1, 3, 3}, rng)});
    }
    SUBCASE("haar resampling") {
        check_gradients(
            [](Tape& t, const std::vector<Tape::Id>& in) {
                const auto down = t.haar_down2(in[0]);
                const auto up = t.haar_band_up2(t.slice_channels(down, 2, 2), 2);
                return t.sum_squares(up);
            },
            {random_tensor({2, 4, 4}, rng)});
    }
    SUBCASE("scalar-scale, sum, sum-abs-weighted, sum-squares") {
        Tensor x = random_tensor({1, 3, 3}, rng);
        for (double& v : x.data) v += v >= 0.0 ? 0.25 : -0.25;  // keep |x| smooth
        check_gradients(
            [](Tape& t, const std::vector<Tape::Id>& in) {
                const auto a = t.sum(t.scale(in[0], 1.7));
                const auto b = t.sum_abs_weighted(in[0], 0.5);
                return t.add(t.add(a, b), t.sum_squares(in[0]));
            },
            {x});
    }
}

TEST_CASE("conv2d-transpose is the exact adjoint of conv2d") {
    Rng rng(5);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor x = random_tensor({2, 6, 5}, rng);
        const Tensor k = random_tensor({3, 2, 3, 3}, rng);
        const Tensor y = random_tensor({3, 6, 5}, rng);
        Tape tape;
        const auto conv_x = tape.conv2d(tape.leaf(x), tape.leaf(k));
        const auto convt_y = tape.conv2d_transpose(tape.leaf(y), tape.leaf(k));
        double lhs = 0.0, rhs = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) lhs += tape.value(conv_x).data[i] * y.data[i];
        for (std::size_t i = 0; i < x.data.size(); ++i) rhs += x.data[i] * tape.value(convt_y).data[i];
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(std::abs(lhs), 1.0));
    }
}

TEST_CASE("backward is linear: gradient of a sum equals the sum of gradients") {
    Rng rng(9);
    const Tensor x = random_tensor({1, 4, 4}, rng);
    const Tensor k = random_tensor({2, 1, 3, 3}, rng);
    auto grad_of = [&](bool first, bool second) {
        Tape tape;
        const auto xi = tape.leaf(x);
        const auto ki = tape.leaf(k);
        const auto y = tape.conv2d(xi, ki);
        const auto a = tape.sum_squares(y);
        const auto b = tape.sum_abs_weighted(y, 0.25);
        Tape::Id out;
        if (first && second)
            out = tape.add(a, b);
        else
            out = first ? a : b;
        return tape.backward(out, Tensor::scalar(1.0))[static_cast<std::size_t>(xi)];
    };
    const Tensor ga = grad_of(true, false);
    const Tensor gb = grad_of(false, true);
    const Tensor gsum = grad_of(true, true);
    for (std::size_t i = 0; i < gsum.data.size(); ++i)
        CHECK(gsum.data[i] == doctest::Approx(ga.data[i] + gb.data[i]).epsilon(1e-13));
}

TEST_CASE("forward and backward are bit-deterministic") {
    auto run = [] {
        Rng rng(77);
        Tape tape;
        const auto x = tape.leaf(random_tensor({2, 4, 4}, rng));
        const auto k = tape.leaf(random_tensor({2, 2, 3, 3}, rng));
        const auto y = tape.sum_squares(tape.relu(tape.conv2d(x, k)));
        auto grads = tape.backward(y, Tensor::scalar(1.0));
        return std::make_pair(tape.value(y).data[0], grads[static_cast<std::size_t>(x)].data);
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
}

TEST_CASE("vjp") {
    SUBCASE("identity net returns the cotangent unchanged") {
        Rng rng(13);
        const Tensor x = random_tensor({1, 3, 3}, rng);
        const Tensor w = random_tensor({1, 3, 3}, rng);
        const Tensor got = vjp([](Tape& t, Tape::Id in) { return t.scale(in, 1.0); }, x, w);
        CHECK(got.data == w.data);
    }
    SUBCASE("linear net matches the explicit transpose on a 5x7 matrix") {
        Rng rng(14);
        const Tensor a = random_tensor({5, 7, 1, 1}, rng);  // matrix as 1x1 conv
        const Tensor x = random_tensor({7, 1, 1}, rng);
        const Tensor w = random_tensor({5, 1, 1}, rng);
        const Tensor got =
            vjp([&a](Tape& t, Tape::Id in) { return t.conv2d(in, t.leaf(a)); }, x, w);
        for (int j = 0; j < 7; ++j) {
            double want = 0.0;
            for (int i = 0; i < 5; ++i)
                want += a.data[static_cast<std::size_t>(i) * 7 + j] * w.data[static_cast<std::size_t>(i)];
            CHECK(got.data[static_cast<std::size_t>(j)] == doctest::Approx(want).epsilon(1e-12));
        }
    }
    SUBCASE("<Jv, w> = <v, J^T w> via forward differences") {
        Rng rng(15);
        const Tensor k1 = random_tensor({3, 1, 3, 3}, rng);
        const Tensor k2 = random_tensor({1, 3, 3, 3}, rng);
        auto net = [&](Tape& t, Tape::Id in) {
            return t.conv2d(t.relu(t.conv2d(in, t.leaf(k1))), t.leaf(k2));
        };
        const Tensor x = random_tensor({1, 4, 4}, rng);
        const Tensor v = random_tensor({1, 4, 4}, rng);
        const Tensor w = random_tensor({1, 4, 4}, rng);

        auto eval = [&](const Tensor& at) {
            Tape t;
            return t.value(net(t, t.leaf(at))).data;
        };
        const double eps = 1e-6;
        Tensor xp = x, xm = x;
        for (std::size_t i = 0; i < x.data.size(); ++i) {
            xp.data[i] += eps * v.data[i];
            xm.data[i] -= eps * v.data[i];
        }
        const auto fp = eval(xp);
        const auto fm = eval(xm);
        double jv_dot_w = 0.0;
        for (std::size_t i = 0; i < fp.size(); ++i)
            jv_dot_w += w.data[i] * (fp[i] - fm[i]) / (2.0 * eps);
        const Tensor jtw = vjp(net, x, w);
        double v_dot_jtw = 0.0;
        for (std::size_t i = 0; i < x.data.size(); ++i) v_dot_jtw += v.data[i] * jtw.data[i];
        CHECK(std::abs(jv_dot_w - v_dot_jtw) / std::max(std::abs(v_dot_jtw), 1e-6) < 1e-4);
    }
}

TEST_CASE("adam") {
    SUBCASE("first step with unit gradient moves by about -lr") {
        ParamStore store;
        store.insert("w", Tensor({1}, {0.0}));
        AdamState st;
        AdamConfig cfg;
        cfg.lr = 0.01;
        adam_step(store, {{"w", Tensor({1}, {1.0})}}, st, cfg, 1);
        CHECK(std::abs(store.at("w").data[0] + cfg.lr) < 1e-6 * cfg.lr + 1e-12);
    }
    SUBCASE("zero gradients leave parameters unchanged") {
        ParamStore store;
        store.insert("w", Tensor({2}, {0.5, -0.25}));
        AdamState st;
        for (long t = 1; t <= 10; ++t)
            adam_step(store, {{"w", Tensor::zeros({2})}}, st, AdamConfig{}, t);
        CHECK(store.at("w").data == std::vector<double>{0.5, -0.25});
    }
    SUBCASE("100 steps on (x-3)^2 follow the scalar reference into [2.5, 3.5]") {
        ParamStore store;
        store.insert("x", Tensor({1}, {0.0}));
        AdamState st;
        AdamConfig cfg;
        cfg.lr = 0.1;
        // independent scalar reference implementation
        double xr = 0.0, m = 0.0, v = 0.0;
        for (long t = 1; t <= 100; ++t) {
            const double x = store.at("x").data[0];
            adam_step(store, {{"x", Tensor({1}, {2.0 * (x - 3.0)})}}, st, cfg, t);
            const double g = 2.0 * (xr - 3.0);
            m = cfg.beta1 * m + (1 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
            const double mh = m / (1 - std::pow(cfg.beta1, static_cast<double>(t)));
            const double vh = v / (1 - std::pow(cfg.beta2, static_cast<double>(t)));
            xr -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        }
        CHECK(store.at("x").data[0] == doctest::Approx(xr).epsilon(1e-12));
        CHECK(std::abs(store.at("x").data[0] - 3.0) < 0.5);
    }
    SUBCASE("non-finite gradients are rejected with the parameter named") {
        ParamStore store;
        store.insert("bad", Tensor({1}, {0.0}));
        AdamState st;
        CHECK_THROWS_WITH_AS(
            adam_step(store, {{"bad", Tensor({1}, {std::nan("")})}}, st, AdamConfig{}, 1),
            doctest::Contains("bad"), std::runtime_error);
    }
}

TEST_CASE("ParamStore serialization round-trips bit-exactly") {
    Rng rng(101);
    ParamStore store;
    store.role = ParamRole::kEncoder;
    store.insert("a.kernel", random_tensor({3, 2, 3, 3}, rng));
    store.insert("b.scale", Tensor({3}, {1e-300, -0.0, 0.1}));
    store.insert("c", Tensor({1}, {3.141592653589793}));

    const auto dir = std::filesystem::temp_directory_path() / "desyre_test_store";
    std::filesystem::create_directories(dir);
    const auto path = dir / "params.dsr";
    store.save(path);
    const ParamStore back = ParamStore::load(path, ParamRole::kEncoder);
    REQUIRE(back.params.size() == store.params.size());
    for (const auto& [name, t] : store.params) {
        const Tensor& u = back.at(name);
        CHECK(u.shape == t.shape);
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            std::uint64_t bits_a = 0, bits_b = 0;
            std::memcpy(&bits_a, &t.data[i], 8);
            std::memcpy(&bits_b, &u.data[i], 8);
            CHECK(bits_a == bits_b);
        }
    }
    // a second save produces identical bytes
    const auto path2 = dir / "params2.dsr";
    back.save(path2);
    CHECK(io::read_text_file(path) == io::read_text_file(path2));
    CHECK(store.total_parameters() == 3 * 2 * 3 * 3 + 3 + 1);
}
