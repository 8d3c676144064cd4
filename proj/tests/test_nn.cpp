#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "soilspec/arch.hpp"
#include "soilspec/nn.hpp"
#include "soilspec/rng.hpp"

using namespace soilspec;
using namespace soilspec::nn;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    Tensor t(std::move(shape));
    Rng rng(seed);
    for (double& v : t.storage()) v = rng.uniform(-1.0, 1.0);
    return t;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("conv1d identity and hand-computed cross-correlation") {
    Conv1d ident("id", 1, 1, 1, 1, 0);
    ident.weights().value[0] = 1.0;
    const Tensor x = random_tensor({2, 1, 5}, 1);
    const Tensor y = ident.forward(x, false);
    REQUIRE(y.shape() == x.shape());
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(y[i] == x[i]);

    Conv1d box("box", 1, 1, 3, 1, 1);
    box.weights().value.fill(1.0);
    Tensor in({1, 1, 4});
    in[0] = 1;
    in[1] = 2;
    in[2] = 3;
    in[3] = 4;
    const Tensor out = box.forward(in, false);
    REQUIRE(out.dim(2) == 4);
    CHECK(out[0] == 3.0);
    CHECK(out[1] == 6.0);
    CHECK(out[2] == 9.0);
    CHECK(out[3] == 7.0);
}

TEST_CASE("conv1d output shapes for the two kernel configurations") {
    Conv1d down("down", 1, 16, 4, 2, 1);
    const Tensor y = down.forward(random_tensor({1, 1, 2048}, 2), false);
    CHECK(y.dim(1) == 16);
    CHECK(y.dim(2) == 1024);

    Conv1d refine("refine", 16, 16, 3, 1, 1);
    const Tensor z = refine.forward(y, false);
    CHECK(z.dim(1) == 16);
    CHECK(z.dim(2) == 1024);
}

TEST_CASE("conv1d backward matches finite differences") {
    Conv1d conv("c", 2, 3, 4, 2, 1);
    Rng rng(3);
    conv.init_params(rng, 0.0);
    CHECK(gradient_check(conv, random_tensor({2, 2, 8}, 4)) < 1e-4);

    Conv1d conv3("c3", 2, 3, 3, 1, 1);
    conv3.init_params(rng, 0.0);
    CHECK(gradient_check(conv3, random_tensor({2, 2, 8}, 5)) < 1e-4);
}

TEST_CASE("conv1d zero grad and bias gradient identity") {
    Conv1d conv("c", 2, 3, 3, 1, 1);
    Rng rng(6);
    conv.init_params(rng, 0.0);
    const Tensor x = random_tensor({2, 2, 6}, 7);
    const Tensor y = conv.forward(x, false);

    Tensor zero(y.shape());
    const Tensor gx = conv.backward(zero);
    for (std::size_t i = 0; i < gx.numel(); ++i) CHECK(gx[i] == 0.0);
    for (std::size_t i = 0; i < conv.weights().grad.numel(); ++i)
        CHECK(conv.weights().grad[i] == 0.0);

    Tensor g = random_tensor(y.shape(), 8);
    conv.forward(x, false);
    conv.backward(g);
    for (std::size_t oc = 0; oc < 3; ++oc) {
        double sum = 0.0;
        for (std::size_t b = 0; b < g.dim(0); ++b)
            for (std::size_t p = 0; p < g.dim(2); ++p) sum += g(b, oc, p);
        CHECK(conv.bias().grad[oc] == doctest::Approx(sum).epsilon(1e-12));
    }
}

TEST_CASE("batchnorm normalizes with batch statistics in train mode") {
    BatchNorm1d bn("bn", 1);
    // One channel whose values have mean 5 and variance 4.
    Tensor x({2, 1, 2});
    x[0] = 3.0;
    x[1] = 7.0;
    x[2] = 3.0;
    x[3] = 7.0;
    const Tensor y = bn.forward(x, true);
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 4; ++i) mean += y[i];
    mean /= 4;
    for (std::size_t i = 0; i < 4; ++i) var += (y[i] - mean) * (y[i] - mean);
    var /= 4;
    CHECK(std::fabs(mean) <= 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("batchnorm applies gain and bias") {
    BatchNorm1d bn("bn", 1);
    bn.gamma().value[0] = 2.0;
    bn.beta().value[0] = 3.0;
    Rng rng(10);
    Tensor x({8, 1, 16});
    for (double& v : x.storage()) v = rng.normal();
    const Tensor y = bn.forward(x, true);
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < y.numel(); ++i) mean += y[i];
    mean /= double(y.numel());
    for (std::size_t i = 0; i < y.numel(); ++i) var += (y[i] - mean) * (y[i] - mean);
    var /= double(y.numel());
    CHECK(mean == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(std::sqrt(var) == doctest::Approx(2.0).epsilon(1e-3));
}

TEST_CASE("batchnorm running statistics update rule") {
    BatchNorm1d bn("bn", 1, 0.01);
    Tensor x({2, 1, 1});
    x[0] = 9.0;
    x[1] = 11.0;  // batch mean 10
    bn.forward(x, true);
    CHECK(bn.running_mean()[0] == doctest::Approx(0.1));  // 0.99*0 + 0.01*10
}

TEST_CASE("batchnorm eval before any update is an error") {
    BatchNorm1d bn("bn", 2);
    Tensor x({1, 2, 4});
    CHECK_THROWS_WITH_AS((void)bn.forward(x, false), doctest::Contains("running-stat"),
                         std::runtime_error);
    bn.forward(random_tensor({4, 2, 4}, 11), true);
    CHECK_NOTHROW((void)bn.forward(x, false));
}

TEST_CASE("batchnorm per-channel invariant before gain and bias") {
    BatchNorm1d bn("bn", 3);
    const Tensor x = random_tensor({4, 3, 8}, 12);
    const Tensor y = bn.forward(x, true);
    for (std::size_t c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t l = 0; l < 8; ++l) mean += y(b, c, l);
        mean /= 32.0;
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t l = 0; l < 8; ++l) var += (y(b, c, l) - mean) * (y(b, c, l) - mean);
        var /= 32.0;
        CHECK(std::fabs(mean) <= 1e-6);
        CHECK(std::fabs(var - 1.0) <= 1e-4);
    }
}

TEST_CASE("batchnorm backward matches finite differences in train mode") {
    BatchNorm1d bn("bn", 2);
    bn.gamma().value[0] = 1.3;
    bn.gamma().value[1] = 0.8;
    bn.beta().value[0] = -0.4;
    CHECK(gradient_check(bn, random_tensor({3, 2, 5}, 13)) < 1e-4);
}

TEST_CASE("leaky activation values and gradient") {
    LeakyReLU relu(0.0);
    Tensor x({2});
    x[0] = -1.0;
    x[1] = 2.0;
    const Tensor y = relu.forward(x, false);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == 2.0);

    LeakyReLU leaky(0.2);
    const Tensor z = leaky.forward(x, false);
    CHECK(z[0] == doctest::Approx(-0.2));
    CHECK(z[1] == 2.0);

    Tensor ones({2});
    ones.fill(1.0);
    const Tensor g = leaky.backward(ones);
    CHECK(g[0] == doctest::Approx(0.2));
    CHECK(g[1] == 1.0);

    CHECK(gradient_check(leaky, random_tensor({2, 3, 4}, 14)) < 1e-4);
    CHECK_THROWS_AS(LeakyReLU(1.0), std::invalid_argument);
}

TEST_CASE("linear layer forward and backward") {
    Linear ident("id", 2, 2);
    ident.weights().value(0, 0) = 1.0;
    ident.weights().value(1, 1) = 1.0;
    Tensor x({1, 2});
    x[0] = 5.0;
    x[1] = -3.0;
    const Tensor y = ident.forward(x, false);
    CHECK(y[0] == 5.0);
    CHECK(y[1] == -3.0);

    Linear lin("l", 2, 2);
    lin.weights().value(0, 0) = 1.0;
    lin.weights().value(0, 1) = 1.0;
    lin.weights().value(1, 0) = 0.0;
    lin.weights().value(1, 1) = 1.0;
    lin.bias().value[0] = 1.0;
    Tensor v({1, 2});
    v[0] = 1.0;
    v[1] = 2.0;
    const Tensor w = lin.forward(v, false);
    CHECK(w[0] == 4.0);  // 1+2+1
    CHECK(w[1] == 2.0);

    Linear rnd("r", 8, 3);
    Rng rng(15);
    rnd.init_params(rng, 0.0);
    CHECK(gradient_check(rnd, random_tensor({4, 8}, 16)) < 1e-4);
}

TEST_CASE("adamw trivial updates") {
    NamedTensor p("p", {1}, true);
    p.value[0] = 1.0;
    std::vector<NamedTensor*> params = {&p};

    SUBCASE("zero gradients, no decay: parameters unchanged") {
        AdamW opt(0.1, 0.0);
        opt.step(params);
        CHECK(p.value[0] == 1.0);
    }
    SUBCASE("closed-form first step") {
        AdamW opt(0.1, 0.0);
        p.grad[0] = 1.0;
        opt.step(params);
        CHECK(p.value[0] == doctest::Approx(0.9).epsilon(1e-6));
    }
    SUBCASE("decay-only update") {
        AdamW opt(1e-4, 0.01);
        opt.step(params);
        CHECK(p.value[0] == doctest::Approx(1.0 - 1e-6).epsilon(1e-12));
    }
    SUBCASE("decay skipped for non-decay parameters") {
        p.decay = false;
        AdamW opt(1e-4, 0.01);
        opt.step(params);
        CHECK(p.value[0] == 1.0);
    }
    SUBCASE("non-finite gradient names the parameter") {
        AdamW opt(0.1, 0.0);
        p.grad[0] = std::nan("");
        CHECK_THROWS_WITH_AS(opt.step(params), doctest::Contains("p"), std::runtime_error);
    }
}

TEST_CASE("adamw is deterministic") {
    auto run = [] {
        NamedTensor p("p", {4}, true);
        for (std::size_t i = 0; i < 4; ++i) p.value[i] = double(i) + 1.0;
        std::vector<NamedTensor*> params = {&p};
        AdamW opt(0.01, 0.01);
        for (int s = 0; s < 5; ++s) {
            for (std::size_t i = 0; i < 4; ++i) p.grad[i] = 0.1 * double(i) - 0.2;
            opt.step(params);
        }
        return p.value.storage();
    };
    CHECK(run() == run());
}

TEST_CASE("gradient check on a composed block and a full small network") {
    // conv + BN + activation block
    Model block;
    block.add(std::make_unique<Conv1d>("b.down", 1, 4, 4, 2, 1));
    block.add(std::make_unique<BatchNorm1d>("b.bn", 4));
    block.add(std::make_unique<LeakyReLU>(0.2));
    block.mark_block_end();
    Rng rng(17);
    for (std::size_t i = 0; i < block.n_layers(); ++i) block.layer(i).init_params(rng, 0.2);
    CHECK(gradient_check(block, random_tensor({2, 1, 16}, 18)) < 1e-4);

    // 3-block network, input length 32
    NetSpec spec;
    spec.n_in = 32;
    spec.n_out = 4;
    spec.p_min = 1;
    spec.p_max = 3;
    spec.n_refine = 1;
    spec.use_norm = true;
    spec.leak = 0.2;
    spec.proj_hidden = 8;
    spec.n_vars = 2;
    Model net = build_network(spec, 19);
    CHECK(net.n_blocks() == 3);
    CHECK(gradient_check(net, random_tensor({2, 1, 32}, 20)) < 1e-3);
}

TEST_CASE("checkpoint round trip is byte exact") {
    NetSpec spec;
    spec.n_in = 16;
    spec.n_out = 4;
    spec.p_min = 1;
    spec.p_max = 2;
    spec.n_refine = 1;
    spec.proj_hidden = 4;
    spec.n_vars = 2;

    namespace fs = std::filesystem;
    const auto dir = fs::temp_directory_path();
    const auto p1 = (dir / "soilspec_ckpt_a.bin").string();
    const auto p2 = (dir / "soilspec_ckpt_b.bin").string();
    const auto p3 = (dir / "soilspec_ckpt_c.bin").string();

    Model m1 = build_network(spec, 77);
    m1.forward(random_tensor({4, 1, 16}, 21), true);  // give BN real running stats
    nlohmann::ordered_json extras;
    extras["note"] = "test";
    save_model(m1, p1, extras);

    nlohmann::ordered_json got;
    Model m2 = load_model(p1, &got);
    CHECK(got["note"] == "test");
    save_model(m2, p2, got);
    CHECK(slurp(p1) == slurp(p2));

    // Same spec and seed rebuild identically before any training.
    Model f1 = build_network(spec, 123);
    Model f2 = build_network(spec, 123);
    save_model(f1, p1);
    save_model(f2, p3);
    CHECK(slurp(p1) == slurp(p3));

    // Loaded model computes the same outputs.
    const Tensor x = random_tensor({2, 1, 16}, 22);
    Model m3 = load_model(p2);
    const Tensor y1 = m1.forward(x, false);
    const Tensor y3 = m3.forward(x, false);
    for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1[i] == y3[i]);

    fs::remove(p1);
    fs::remove(p2);
    fs::remove(p3);
}

TEST_CASE("conv rejects mismatched shapes") {
    Conv1d conv("c", 2, 3, 3, 1, 1);
    CHECK_THROWS_AS((void)conv.forward(random_tensor({1, 4, 8}, 23), false),
                    std::invalid_argument);
    CHECK_THROWS_AS((void)Conv1d("c", 1, 1, 5, 1, 0).forward(random_tensor({1, 1, 2}, 24), false),
                    std::invalid_argument);
}
