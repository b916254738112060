#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "enfed/datasets.hpp"
#include "enfed/gradcheck.hpp"
#include "enfed/nn.hpp"

using namespace enfed;

namespace {

Hyperparams small_hp(std::vector<int> sizes, std::uint64_t seed = 1, int epochs = 10,
                     double lr = 1e-3) {
    Hyperparams hp;
    hp.layer_sizes = std::move(sizes);
    hp.epochs = epochs;
    hp.batch_size = 32;
    hp.learning_rate = lr;
    hp.seed = seed;
    return hp;
}

// Independent separability oracle: binary logistic regression trained by
// full-batch gradient descent in double precision.
double logistic_oracle_accuracy(const Dataset& ds) {
    const std::size_t n = ds.rows(), d = ds.dim();
    std::vector<double> w(d, 0.0);
    double b = 0.0;
    for (int iter = 0; iter < 400; ++iter) {
        std::vector<double> gw(d, 0.0);
        double gb = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double z = b;
            for (std::size_t c = 0; c < d; ++c) z += w[c] * ds.features(i, c);
            const double p = 1.0 / (1.0 + std::exp(-z));
            const double err = p - (ds.labels[i] == 1 ? 1.0 : 0.0);
            for (std::size_t c = 0; c < d; ++c) gw[c] += err * ds.features(i, c);
            gb += err;
        }
        for (std::size_t c = 0; c < d; ++c) w[c] -= 0.5 * gw[c] / n;
        b -= 0.5 * gb / n;
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double z = b;
        for (std::size_t c = 0; c < d; ++c) z += w[c] * ds.features(i, c);
        if ((z > 0.0 ? 1 : 0) == ds.labels[i]) ++correct;
    }
    return static_cast<double>(correct) / n;
}

}  // namespace

TEST_CASE("init is deterministic for a fixed seed", "[nn]") {
    auto a = init_mlp(small_hp({2, 2}, 7));
    auto b = init_mlp(small_hp({2, 2}, 7));
    REQUIRE(bitwise_equal(a, b));
    auto c = init_mlp(small_hp({2, 2}, 8));
    REQUIRE_FALSE(bitwise_equal(a, c));
}

TEST_CASE("init produces chained shapes and zero biases", "[nn]") {
    auto net = init_mlp(small_hp({4, 3, 2}));
    REQUIRE(net.layers.size() == 2);
    REQUIRE(net.layers[0].w.rows == 3);
    REQUIRE(net.layers[0].w.cols == 4);
    REQUIRE(net.layers[0].b.size() == 3);
    REQUIRE(net.layers[1].w.rows == 2);
    REQUIRE(net.layers[1].w.cols == 3);
    REQUIRE(net.layers[1].b.size() == 2);
    REQUIRE(net.layers[0].act == Activation::Relu);
    REQUIRE(net.layers[1].act == Activation::Softmax);
    for (const auto& l : net.layers)
        for (float v : l.b) REQUIRE(v == 0.0f);
}

TEST_CASE("init weights center on zero", "[nn]") {
    // sample-mean oracle on ~12k weights with fan_in = fan_out = 64
    auto net = init_mlp(small_hp({64, 64, 64, 64}, 99));
    double sum = 0.0;
    std::size_t count = 0;
    const double limit = std::sqrt(6.0 / 128.0);
    for (const auto& l : net.layers) {
        for (float v : l.w.a) {
            if (count < 10000) {
                sum += v;
                ++count;
            }
            REQUIRE(std::fabs(v) <= limit);
        }
    }
    REQUIRE(count == 10000);
    REQUIRE(std::fabs(sum / count) < 0.01);
}

TEST_CASE("degenerate layer sizes are rejected", "[nn]") {
    REQUIRE_THROWS_AS(init_mlp(small_hp({4, 0, 2})), std::invalid_argument);
    REQUIRE_THROWS_AS(init_mlp(small_hp({4})), std::invalid_argument);
}

TEST_CASE("zero weights give the uniform softmax", "[nn]") {
    Hyperparams hp = small_hp({3, 5});
    auto net = init_mlp(hp);
    for (auto& l : net.layers)
        for (auto& v : l.w.a) v = 0.0f;
    Mat<float> x(4, 3);
    x.a = {1, -2, 3, 0, 0, 0, 5, 5, 5, -1, 2, 0.5f};
    auto probs = forward(net, x);
    for (std::size_t i = 0; i < probs.rows; ++i)
        for (std::size_t c = 0; c < probs.cols; ++c)
            REQUIRE(probs(i, c) == Catch::Approx(0.2).margin(1e-7));
}

TEST_CASE("a dominant logit wins the argmax", "[nn]") {
    Net<float> net;
    net.layers.resize(1);
    net.layers[0].w = Mat<float>(3, 3);
    net.layers[0].b = {0.0f, 0.0f, 0.0f};
    net.layers[0].act = Activation::Softmax;
    net.layers[0].w(1, 0) = 50.0f;  // feature 0 drives class 1
    Mat<float> x(1, 3);
    x.a = {1.0f, 0.0f, 0.0f};
    auto probs = forward(net, x);
    REQUIRE(predict_row(probs, 0) == 1);
    REQUIRE(probs(0, 1) > 0.99f);
}

TEST_CASE("softmax rows sum to one", "[nn]") {
    auto net = init_mlp(small_hp({6, 16, 8, 4}, 5));
    Rng rng(17);
    Mat<float> x(32, 6);
    for (auto& v : x.a) v = static_cast<float>(rng.normal() * 3.0);
    auto probs = forward(net, x);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        double sum = 0.0;
        for (std::size_t c = 0; c < probs.cols; ++c) {
            sum += probs(i, c);
            REQUIRE(probs(i, c) >= 0.0f);
            REQUIRE(probs(i, c) <= 1.0f);
        }
        REQUIRE(std::fabs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("dimension mismatches are rejected", "[nn]") {
    auto net = init_mlp(small_hp({4, 3, 2}));
    Mat<float> x(2, 5);
    REQUIRE_THROWS_AS(forward(net, x), std::invalid_argument);
}

TEST_CASE("fit separates two Gaussian blobs", "[nn]") {
    Dataset ds = synth_generate(2, 100, 2, 8.0, 1);
    // the oracle certifies the data is separable before we gate the MLP on it
    REQUIRE(logistic_oracle_accuracy(ds) >= 0.99);

    Hyperparams hp = small_hp({2, 8, 2}, 1, 50, 0.01);
    auto result = fit(init_mlp(hp), ds, hp);
    REQUIRE(accuracy_score(result.net, ds) >= 0.99);
}

TEST_CASE("zero learning rate is the identity on weights", "[nn]") {
    Dataset ds = synth_generate(3, 30, 4, 4.0, 2);
    Hyperparams hp = small_hp({4, 8, 3}, 3, 5, 0.0);
    auto net = init_mlp(hp);
    auto result = fit(net, ds, hp);
    REQUIRE(bitwise_equal(net, result.net));
}

TEST_CASE("training reduces the loss on blob data", "[nn]") {
    Dataset ds = synth_generate(6, 40, 8, 6.0, 4);
    Hyperparams hp = small_hp({8, 64, 32, 6}, 4, 100, 1e-3);
    auto result = fit(init_mlp(hp), ds, hp);
    REQUIRE(result.epoch_loss.size() == 100);
    REQUIRE(result.epoch_loss.back() < result.epoch_loss.front());
}

TEST_CASE("fit is bitwise deterministic", "[nn]") {
    Dataset ds = synth_generate(3, 40, 5, 5.0, 6);
    Hyperparams hp = small_hp({5, 12, 3}, 6, 8, 5e-3);
    auto a = fit(init_mlp(hp), ds, hp);
    auto b = fit(init_mlp(hp), ds, hp);
    REQUIRE(bitwise_equal(a.net, b.net));
    REQUIRE(a.epoch_loss == b.epoch_loss);
}

TEST_CASE("oversized batch size is clamped", "[nn]") {
    Dataset ds = synth_generate(2, 10, 3, 6.0, 7);
    Hyperparams hp = small_hp({3, 4, 2}, 7, 3, 1e-3);
    hp.batch_size = 100000;
    REQUIRE_NOTHROW(fit(init_mlp(hp), ds, hp));
}

TEST_CASE("divergence aborts instead of returning NaN weights", "[nn]") {
    // three layers so the blown-up activations overflow f32 within a few steps
    Dataset ds = synth_generate(2, 50, 4, 6.0, 8);
    Hyperparams hp = small_hp({4, 16, 16, 2}, 8, 30, 1e15);
    REQUIRE_THROWS_AS(fit(init_mlp(hp), ds, hp), DivergenceError);
}

TEST_CASE("uniform predictions break ties toward class zero", "[nn]") {
    Hyperparams hp = small_hp({3, 5});
    auto net = init_mlp(hp);
    for (auto& l : net.layers)
        for (auto& v : l.w.a) v = 0.0f;
    Dataset test;
    test.class_count = 5;
    test.features = Mat<float>(100, 3);
    test.labels.resize(100);
    Rng rng(10);
    for (auto& v : test.features.a) v = static_cast<float>(rng.normal());
    for (int i = 0; i < 100; ++i) test.labels[i] = i % 5;  // balanced: 20 per class
    REQUIRE(accuracy_score(net, test) == Catch::Approx(0.2));
}

TEST_CASE("perfect predictions score one", "[nn]") {
    Net<float> net;
    net.layers.resize(1);
    net.layers[0].w = Mat<float>(4, 4);
    net.layers[0].b.assign(4, 0.0f);
    net.layers[0].act = Activation::Softmax;
    for (int i = 0; i < 4; ++i) net.layers[0].w(i, i) = 30.0f;
    Dataset test;
    test.class_count = 4;
    test.features = Mat<float>(8, 4);
    test.labels.resize(8);
    for (int i = 0; i < 8; ++i) {
        test.features(i, i % 4) = 1.0f;
        test.labels[i] = i % 4;
    }
    REQUIRE(accuracy_score(net, test) == 1.0);
}

TEST_CASE("accuracy matches a row-by-row recount", "[nn]") {
    auto net = init_mlp(small_hp({6, 10, 4}, 11));
    Dataset test;
    test.class_count = 4;
    test.features = Mat<float>(100, 6);
    test.labels.resize(100);
    Rng rng(12);
    for (auto& v : test.features.a) v = static_cast<float>(rng.normal());
    for (auto& l : test.labels) l = static_cast<int>(rng.below(4));

    auto probs = forward(net, mat_cast<float>(test.features));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        int best = 0;
        for (std::size_t c = 1; c < 4; ++c)
            if (probs(i, c) > probs(i, best)) best = static_cast<int>(c);
        if (best == test.labels[i]) ++correct;
    }
    REQUIRE(accuracy_score(net, test) == Catch::Approx(correct / 100.0));
}

TEST_CASE("empty test sets are rejected", "[nn]") {
    auto net = init_mlp(small_hp({3, 2}));
    Dataset empty;
    empty.class_count = 2;
    empty.features = Mat<float>(0, 3);
    REQUIRE_THROWS_AS(accuracy_score(net, empty), std::invalid_argument);
}

TEST_CASE("zero input kills the weight gradient but not the bias gradient", "[nn]") {
    Net<float> net;
    net.layers.resize(1);
    net.layers[0].w = Mat<float>(2, 3);
    net.layers[0].w.a = {0.5f, -0.2f, 0.1f, 0.3f, 0.7f, -0.4f};
    net.layers[0].b = {0.0f, 0.0f};
    net.layers[0].act = Activation::Softmax;
    Mat<float> x(4, 3);  // all zeros
    std::vector<int> y = {0, 1, 0, 1};
    auto g = gradient(net, x, y);
    for (float v : g.layers[0].w.a) REQUIRE(v == 0.0f);
    double bias_mag = 0.0;
    for (float v : g.layers[0].b) bias_mag += std::fabs(v);
    REQUIRE(bias_mag == 0.0);  // balanced labels with uniform probs cancel exactly

    y = {0, 0, 0, 1};  // unbalanced: bias gradient must be nonzero
    g = gradient(net, x, y);
    bias_mag = 0.0;
    for (float v : g.layers[0].b) bias_mag += std::fabs(v);
    REQUIRE(bias_mag > 0.0f);
}

TEST_CASE("duplicating the batch leaves the mean gradient unchanged", "[nn]") {
    auto net = net_cast<double>(init_mlp(small_hp({4, 6, 3}, 13)));
    Rng rng(14);
    Mat<double> x(10, 4);
    for (auto& v : x.a) v = rng.normal();
    std::vector<int> y(10);
    for (auto& l : y) l = static_cast<int>(rng.below(3));

    Mat<double> x2(20, 4);
    std::vector<int> y2(20);
    for (int i = 0; i < 20; ++i) {
        for (int c = 0; c < 4; ++c) x2(i, c) = x(i % 10, c);
        y2[i] = y[i % 10];
    }
    auto g1 = gradient(net, x, y);
    auto g2 = gradient(net, x2, y2);
    for (std::size_t k = 0; k < g1.layers.size(); ++k) {
        for (std::size_t i = 0; i < g1.layers[k].w.a.size(); ++i)
            REQUIRE(g1.layers[k].w.a[i] == Catch::Approx(g2.layers[k].w.a[i]).margin(1e-12));
        for (std::size_t i = 0; i < g1.layers[k].b.size(); ++i)
            REQUIRE(g1.layers[k].b[i] == Catch::Approx(g2.layers[k].b[i]).margin(1e-12));
    }
}

TEST_CASE("backprop matches central finite differences", "[nn]") {
    for (auto sizes : {std::vector<int>{4, 8, 3}, {5, 16, 8, 4, 3}, {6, 12, 6, 2}}) {
        Hyperparams hp;
        hp.layer_sizes = sizes;
        auto report = gradient_check(hp, 2024, 10);
        INFO("architecture with " << sizes.size() << " sizes, max rel err " << report.max_rel_err);
        REQUIRE(report.passed(1e-4));
    }
}

TEST_CASE("gradient check detects a corrupted gradient", "[nn]") {
    Hyperparams hp;
    hp.layer_sizes = {4, 8, 3};
    auto report = gradient_check(hp, 2024, 10, 1e-4, 1e-4, true);
    REQUIRE_FALSE(report.passed(1e-4));
}

TEST_CASE("classification metrics stay in range and match accuracy", "[nn]") {
    Dataset ds = synth_generate(4, 50, 6, 6.0, 15);
    Hyperparams hp = small_hp({6, 16, 4}, 15, 30, 5e-3);
    auto result = fit(init_mlp(hp), ds, hp);
    auto cls = classification_metrics(result.net, ds);
    REQUIRE(cls.accuracy == Catch::Approx(accuracy_score(result.net, ds)));
    for (double v : {cls.macro_precision, cls.macro_recall, cls.macro_f1}) {
        REQUIRE(v >= 0.0);
        REQUIRE(v <= 1.0);
    }
    REQUIRE(cls.macro_f1 > 0.5);
}
