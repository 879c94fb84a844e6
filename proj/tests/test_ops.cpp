#include <doctest.h>

#include <cmath>
#include <vector>

#include "nnprof/ops.hpp"

using namespace nnprof;

namespace {

Tensor ones(Shape s, bool rg = false) { return Tensor::full(std::move(s), 1.0f, rg); }

}  // namespace

TEST_CASE("matmul 1x2 by 2x1") {
    Tensor a({1, 2}, {1, 2});
    Tensor b({2, 1}, {3, 4});
    Tensor c = matmul(a, b);
    CHECK(c.shape() == Shape{1, 1});
    CHECK(c.values()[0] == doctest::Approx(11.0f));
}

TEST_CASE("matmul gradients for a scalar product") {
    Tensor a({1, 2}, {1, 2}, true);
    Tensor b({2, 1}, {3, 4}, true);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor c = matmul(a, b);
        Tensor loss = weighted_sum(c, {1.0f});
        tape.backward(loss);
    }
    CHECK(a.grad()[0] == doctest::Approx(3.0f));
    CHECK(a.grad()[1] == doctest::Approx(4.0f));
    CHECK(b.grad()[0] == doctest::Approx(1.0f));
    CHECK(b.grad()[1] == doctest::Approx(2.0f));
}

TEST_CASE("matmul rejects mismatched inner extents") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 5});
    CHECK_THROWS_AS(matmul(a, b), DimensionError);
    CHECK_THROWS_AS(matmul(a, Tensor::zeros({3})), DimensionError);
}

TEST_CASE("conv output geometry on a 28x28 field") {
    Tensor img = Tensor::zeros({1, 28, 28});
    Tensor k = Tensor::zeros({8, 1, 3, 3});
    Tensor bias = Tensor::zeros({8});
    Tensor out = conv2d_3x3_valid(img, k, bias);
    CHECK(out.shape() == Shape{8, 26, 26});

    Tensor batch = Tensor::zeros({5, 1, 28, 28});
    CHECK(conv2d_3x3_valid(batch, k, bias).shape() == Shape{5, 8, 26, 26});
}

TEST_CASE("conv of all-ones 3x3 with a ones kernel is 9") {
    Tensor img = ones({1, 3, 3});
    Tensor k = ones({1, 1, 3, 3});
    Tensor bias = Tensor::zeros({1});
    Tensor out = conv2d_3x3_valid(img, k, bias);
    CHECK(out.shape() == Shape{1, 1, 1});
    CHECK(out.values()[0] == doctest::Approx(9.0f));
}

TEST_CASE("conv applies bias and rejects bad shapes") {
    Tensor img = ones({1, 3, 3});
    Tensor k = ones({2, 1, 3, 3});
    Tensor bias({2}, {0.5f, -1.0f});
    Tensor out = conv2d_3x3_valid(img, k, bias);
    CHECK(out.values()[0] == doctest::Approx(9.5f));
    CHECK(out.values()[1] == doctest::Approx(8.0f));

    CHECK_THROWS_AS(conv2d_3x3_valid(ones({2, 3, 3}), k, bias), DimensionError);  // channels
    CHECK_THROWS_AS(conv2d_3x3_valid(ones({1, 2, 2}), k, bias), DimensionError);  // too small
    CHECK_THROWS_AS(conv2d_3x3_valid(img, k, Tensor::zeros({3})), DimensionError);
}

TEST_CASE("relu clips negatives and gates gradients") {
    Tensor x({4}, {-1.0f, 0.0f, 0.5f, 2.0f}, true);
    Tape tape;
    Tensor y;
    {
        TapeScope scope(tape);
        y = relu(x);
        Tensor loss = weighted_sum(y, {1, 1, 1, 1});
        tape.backward(loss);
    }
    CHECK(y.values() == std::vector<float>{0.0f, 0.0f, 0.5f, 2.0f});
    CHECK(x.grad() == std::vector<float>{0.0f, 0.0f, 1.0f, 1.0f});
}

TEST_CASE("cross entropy of uniform two-way logits is ln 2") {
    Tensor logits({1, 2}, {0.0f, 0.0f}, true);
    Tape tape;
    {
        TapeScope scope(tape);
        Tensor loss = softmax_cross_entropy(logits, {0});
        CHECK(loss.item() == doctest::Approx(0.6931472f));
        tape.backward(loss);
    }
    CHECK(logits.grad()[0] == doctest::Approx(-0.5f));
    CHECK(logits.grad()[1] == doctest::Approx(0.5f));
}

TEST_CASE("cross entropy survives extreme logits") {
    Tensor logits({1, 2}, {1000.0f, -1000.0f});
    Tensor loss = softmax_cross_entropy(logits, {0});
    CHECK(std::isfinite(loss.item()));
    CHECK(loss.item() == doctest::Approx(0.0f).epsilon(1e-6));
}

TEST_CASE("cross entropy validates labels") {
    Tensor logits = Tensor::zeros({2, 10});
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0, 10}), ValidationError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {-1, 0}), ValidationError);
    CHECK_THROWS_AS(softmax_cross_entropy(logits, {0}), DimensionError);
}

TEST_CASE("layer norm standardizes a two-point row") {
    Tensor x({1, 2}, {1.0f, 3.0f});
    Tensor gain = ones({2});
    Tensor shift = Tensor::zeros({2});
    Tensor y = layer_norm(x, gain, shift);
    // mean 2, population variance 1 -> (x-2)/sqrt(1+1e-5)
    CHECK(y.values()[0] == doctest::Approx(-1.0f).epsilon(1e-4));
    CHECK(y.values()[1] == doctest::Approx(1.0f).epsilon(1e-4));

    Tensor g2({2}, {2.0f, 2.0f});
    Tensor s2({2}, {1.0f, 1.0f});
    Tensor y2 = layer_norm(x, g2, s2);
    CHECK(y2.values()[0] == doctest::Approx(-1.0f).epsilon(1e-4));
    CHECK(y2.values()[1] == doctest::Approx(3.0f).epsilon(1e-4));
}

TEST_CASE("softmax over a single element is exactly one") {
    Tensor x({1, 1, 1}, {3.7f});
    Tensor y = softmax_lastdim(x);
    CHECK(y.values()[0] == doctest::Approx(1.0f));
}

TEST_CASE("attention with one token reduces to the V and O projections") {
    Rng rng(5, "toy");
    Tensor x = sample_normal(rng, {1, 4}, 0.0f, 1.0f);
    Tensor wq = sample_normal(rng, {4, 4}, 0.0f, 0.5f);
    Tensor wk = sample_normal(rng, {4, 4}, 0.0f, 0.5f);
    Tensor wv = sample_normal(rng, {4, 4}, 0.0f, 0.5f);
    Tensor wo = sample_normal(rng, {4, 4}, 0.0f, 0.5f);
    Tensor out = multi_head_attention(x, wq, wk, wv, wo, 1);
    Tensor expect = matmul(matmul(x, wv), wo);
    REQUIRE(out.shape() == Shape{1, 4});
    for (int i = 0; i < 4; ++i)
        CHECK(out.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-5));
}

TEST_CASE("zero query and key projections average the value rows") {
    Rng rng(6, "toy");
    const int T = 3, D = 4;
    Tensor x = sample_normal(rng, {T, D}, 0.0f, 1.0f);
    Tensor wz = Tensor::zeros({D, D});
    Tensor wv = sample_normal(rng, {D, D}, 0.0f, 0.5f);
    Tensor wo = sample_normal(rng, {D, D}, 0.0f, 0.5f);
    Tensor out = multi_head_attention(x, wz, wz, wv, wo, 1);
    Tensor vo = matmul(matmul(x, wv), wo);
    for (int d = 0; d < D; ++d) {
        float mean = 0.0f;
        for (int t = 0; t < T; ++t) mean += vo.values()[static_cast<std::size_t>(t * D + d)];
        mean /= T;
        for (int t = 0; t < T; ++t)
            CHECK(out.values()[static_cast<std::size_t>(t * D + d)] ==
                  doctest::Approx(mean).epsilon(1e-5));
    }
}

TEST_CASE("attention validates head divisibility and shapes") {
    Tensor x = Tensor::zeros({2, 3});
    Tensor w = Tensor::zeros({3, 3});
    CHECK_THROWS_AS(multi_head_attention(x, w, w, w, w, 2), ConfigurationError);
    CHECK_THROWS_AS(multi_head_attention(x, w, w, w, w, 0), ConfigurationError);
    CHECK_THROWS_AS(multi_head_attention(x, Tensor::zeros({2, 3}), w, w, w, 1),
                    DimensionError);
    Tensor x4 = Tensor::zeros({2, 4});
    Tensor w4 = Tensor::zeros({4, 4});
    CHECK(multi_head_attention(x4, w4, w4, w4, w4, 2).shape() == Shape{2, 4});
}

TEST_CASE("normal sampling hits requested moments over 1e5 draws") {
    Rng rng(77, "init");
    Tensor t = sample_normal(rng, {100000}, 0.0f, 1.0f);
    double sum = 0.0, sumsq = 0.0;
    for (float v : t.values()) {
        sum += v;
        sumsq += static_cast<double>(v) * v;
    }
    double mean = sum / t.size();
    double sd = std::sqrt((sumsq - t.size() * mean * mean) / (t.size() - 1));
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(sd - 1.0) < 0.02);

    Rng again(77, "init");
    Tensor t2 = sample_normal(again, {100000}, 0.0f, 1.0f);
    CHECK(t.values() == t2.values());

    CHECK_THROWS_AS(sample_normal(rng, {3}, 0.0f, -1.0f), ValidationError);
}

TEST_CASE("fake quantize rounds, clamps and gates gradients") {
    // scale chosen as if max|w| = 1.27 over a signed 8-bit range
    const float s = 1.27f / 127.0f;  // 0.01
    Tensor x({3}, {0.123f, 2.0f, -0.005f}, true);
    Tape tape;
    Tensor y;
    {
        TapeScope scope(tape);
        y = fake_quantize(x, s, 0, -127, 127);
        Tensor loss = weighted_sum(y, {1, 1, 1});
        tape.backward(loss);
    }
    CHECK(y.values()[0] == doctest::Approx(0.12f));
    CHECK(y.values()[1] == doctest::Approx(1.27f));  // clamped at the top of the range
    CHECK(y.values()[2] == doctest::Approx(0.0f));   // -0.5 rounds to even 0
    CHECK(x.grad()[0] == 1.0f);
    CHECK(x.grad()[1] == 0.0f);  // clamped element passes no gradient
    CHECK(x.grad()[2] == 1.0f);

    CHECK_THROWS_AS(fake_quantize(x, 0.0f, 0, -127, 127), ValidationError);
    CHECK_THROWS_AS(fake_quantize(x, 1.0f, 0, 5, 5), ValidationError);
}

TEST_CASE("fake quantize is identity-free only at the grid") {
    Tensor x({1}, {0.25f});
    Tensor y = fake_quantize(x, 0.1f, 0, -127, 127);
    // 2.5 rounds to even 2 under ties-to-even
    CHECK(y.values()[0] == doctest::Approx(0.2f));
}

TEST_CASE("patchify lays out patches row-major with channel-major values") {
    std::vector<float> img(16);
    for (int i = 0; i < 16; ++i) img[static_cast<std::size_t>(i)] = static_cast<float>(i);
    Tensor x({1, 1, 4, 4}, img);
    Tensor p = patchify(x, 2);
    REQUIRE(p.shape() == Shape{1, 4, 4});
    CHECK(p.values()[0] == 0.0f);  // patch (0,0): rows 0-1, cols 0-1
    CHECK(p.values()[1] == 1.0f);
    CHECK(p.values()[2] == 4.0f);
    CHECK(p.values()[3] == 5.0f);
    CHECK(p.values()[4] == 2.0f);  // patch (0,1) starts at column 2
    CHECK_THROWS_AS(patchify(x, 3), DimensionError);
}

TEST_CASE("prepend and select tokens round-trip") {
    Tensor tokens({2, 2, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    Tensor cls({3}, {-1, -2, -3});
    Tensor with = prepend_token(tokens, cls);
    REQUIRE(with.shape() == Shape{2, 3, 3});
    Tensor first = select_token(with, 0);
    CHECK(first.values() == std::vector<float>{-1, -2, -3, -1, -2, -3});
    Tensor second = select_token(with, 1);
    CHECK(second.values() == std::vector<float>{1, 2, 3, 7, 8, 9});
    CHECK_THROWS_AS(select_token(with, 3), DimensionError);
}

TEST_CASE("reshape and slice guard their extents") {
    Tensor x = Tensor::zeros({2, 3});
    CHECK_THROWS_AS(reshape(x, {4, 2}), DimensionError);
    CHECK_THROWS_AS(slice_lastdim(x, 2, 2), DimensionError);
    CHECK(slice_lastdim(x, 1, 2).shape() == Shape{2, 2});
}

TEST_CASE("bmm multiplies per batch element with optional transpose") {
    Tensor a({2, 1, 2}, {1, 2, 3, 4});
    Tensor b({2, 2, 1}, {5, 6, 7, 8});
    Tensor c = bmm(a, b);
    REQUIRE(c.shape() == Shape{2, 1, 1});
    CHECK(c.values()[0] == doctest::Approx(17.0f));
    CHECK(c.values()[1] == doctest::Approx(53.0f));

    Tensor bt({2, 1, 2}, {5, 6, 7, 8});
    Tensor ct = bmm(a, bt, true);
    CHECK(ct.values()[0] == doctest::Approx(17.0f));
    CHECK(ct.values()[1] == doctest::Approx(53.0f));

    CHECK_THROWS_AS(bmm(a, Tensor::zeros({2, 3, 1})), DimensionError);
    CHECK_THROWS_AS(bmm(a, Tensor::zeros({3, 2, 1})), DimensionError);
}
