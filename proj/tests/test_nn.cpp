#include <doctest.h>

#include <cmath>

#include "grad_check.hpp"
#include "helpers.hpp"
#include "tadoc/nn.hpp"

using namespace tadoc;
using ad::Tensor;

TEST_CASE("residual block with zeroed second conv returns the skip path") {
    Rng rng(1);
    nn::ResidualBlock<double> block(8, 8, 4, rng, "blk");
    std::fill(block.c2.weight.value().begin(), block.c2.weight.value().end(), 0.0);
    std::fill(block.c2.bias.value().begin(), block.c2.bias.value().end(), 0.0);
    auto x = Tensor<double>::from({8, 4, 4}, testutil::random_vector(rng, 8 * 16));
    auto y = block(x);
    for (std::size_t i = 0; i < x.numel(); ++i)
        CHECK(y.value()[i] == doctest::Approx(x.value()[i]).epsilon(1e-12));
}

TEST_CASE("residual block gradients") {
    Rng rng(2);
    nn::ResidualBlock<double> block(4, 4, 2, rng, "blk");
    std::vector<Tensor<double>> leaves{
        Tensor<double>::from({4, 3, 3}, testutil::random_vector(rng, 36), true),
        block.c1.weight, block.c1.bias, block.c2.weight, block.c2.bias,
        block.n1.gamma,  block.n1.beta, block.n2.gamma,  block.n2.beta};
    auto target = Tensor<double>::from({4, 3, 3}, testutil::random_vector(rng, 36));
    double err = testutil::finite_diff_check(leaves, [&](auto& ls) {
        return ad::sum_abs_diff(block(ls[0]), target);
    });
    CHECK(err < 1e-3);
}

TEST_CASE("residual block with channel change uses a 1x1 skip") {
    Rng rng(3);
    nn::ResidualBlock<double> block(4, 6, 2, rng, "blk");
    REQUIRE(block.skip.has_value());
    auto x = Tensor<double>::from({4, 5, 5}, testutil::random_vector(rng, 100));
    CHECK(block(x).shape() == ad::Shape{6, 5, 5});
}

TEST_CASE("sinusoidal embedding basics") {
    auto e0 = nn::sinusoidal_embedding<double>(0.0, 8);
    for (int i = 0; i < 4; ++i) {
        CHECK(e0.value()[2 * i] == doctest::Approx(0.0));      // sin 0
        CHECK(e0.value()[2 * i + 1] == doctest::Approx(1.0));  // cos 0
    }
    auto e = nn::sinusoidal_embedding<double>(50.0, 128);
    CHECK(e.value()[0] == doctest::Approx(std::sin(50.0)));
    CHECK(e.value()[1] == doctest::Approx(std::cos(50.0)));
    // distinct steps give distinct embeddings
    auto e2 = nn::sinusoidal_embedding<double>(100.0, 128);
    double diff = 0;
    for (int i = 0; i < 128; ++i) diff += std::abs(e.value()[i] - e2.value()[i]);
    CHECK(diff > 0.1);
    CHECK_THROWS_AS(nn::sinusoidal_embedding<double>(1.0, 7), std::invalid_argument);
}

TEST_CASE("adamw: zero grads and zero decay leave parameters unchanged") {
    auto p = Tensor<float>::from({3}, {1.0f, -2.0f, 0.5f}, true);
    p.zero_grad();
    std::vector<Tensor<float>> params{p};
    nn::AdamW<float> opt(0.1, 0.0);
    for (int i = 0; i < 5; ++i) opt.step(params);
    CHECK(p.value()[0] == 1.0f);
    CHECK(p.value()[1] == -2.0f);
    CHECK(p.value()[2] == 0.5f);
}

TEST_CASE("adamw minimizes a 1-D quadratic") {
    auto x = Tensor<float>::from({1}, {0.0f}, true);
    std::vector<Tensor<float>> params{x};
    nn::AdamW<float> opt(0.1, 0.0);
    for (int i = 0; i < 200; ++i) {
        x.zero_grad();
        // d/dx (x-3)^2 = 2(x-3)
        x.node()->ensure_grad();
        x.grad()[0] = 2.0f * (x.value()[0] - 3.0f);
        opt.step(params);
    }
    CHECK(std::abs(x.value()[0] - 3.0f) < 1e-2);
}

TEST_CASE("adamw decoupled decay shrinks by (1 - lr*wd) per step") {
    auto p = Tensor<float>::from({1}, {2.0f}, true);
    p.zero_grad();
    std::vector<Tensor<float>> params{p};
    double lr = 0.05, wd = 0.2;
    nn::AdamW<float> opt(lr, wd);
    float expected = 2.0f;
    for (int i = 0; i < 10; ++i) {
        opt.step(params);
        expected *= static_cast<float>(1.0 - lr * wd);
    }
    CHECK(p.value()[0] == doctest::Approx(expected).epsilon(1e-6));
}

TEST_CASE("TAPW round trip is bit-exact on fuzzed parameter sets") {
    Rng rng(11);
    for (int rep = 0; rep < 8; ++rep) {
        std::vector<nn::NamedParam> params;
        int count = rng.uniform_int(1, 6);
        for (int i = 0; i < count; ++i) {
            nn::NamedParam p;
            p.name = "p" + std::to_string(i) + std::string(rng.uniform_int(0, 12), 'x');
            int rank = rng.uniform_int(1, 4);
            for (int d = 0; d < rank; ++d) p.shape.push_back(rng.uniform_int(1, 5));
            p.values.resize(ad::shape_numel(p.shape));
            for (auto& v : p.values) v = static_cast<float>(rng.uniform(-10, 10));
            params.push_back(std::move(p));
        }
        auto bytes = nn::encode_tapw(params);
        auto back = nn::decode_tapw(bytes.data(), bytes.size());
        REQUIRE(back.size() == params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            CHECK(back[i].name == params[i].name);
            CHECK(back[i].shape == params[i].shape);
            CHECK(back[i].values == params[i].values);
        }
        CHECK(nn::encode_tapw(back) == bytes);
    }
}

TEST_CASE("TAPW rejects truncated input") {
    nn::NamedParam p{"w", {2, 2}, {1, 2, 3, 4}};
    auto bytes = nn::encode_tapw({p});
    for (std::size_t cut : {std::size_t(2), std::size_t(8), bytes.size() - 2})
        CHECK_THROWS_AS(nn::decode_tapw(bytes.data(), cut), ParseError);
}

TEST_CASE("kaiming init is seed-deterministic") {
    Rng a(99), b(99);
    auto w1 = nn::kaiming_uniform<float>({4, 4, 3, 3}, 36, a, "w");
    auto w2 = nn::kaiming_uniform<float>({4, 4, 3, 3}, 36, b, "w");
    CHECK(w1.value() == w2.value());
}
