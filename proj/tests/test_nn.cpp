#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "tripletforge/errors.hpp"
#include "tripletforge/nn.hpp"
#include "tripletforge/rng.hpp"

using namespace tripletforge;

namespace {

ModelSpec tiny_spec() {
    ModelSpec spec;
    spec.input_channels = 1;
    spec.input_h = 8;
    spec.input_w = 10;
    spec.layers = {
        {LayerKind::Conv2d, 3, 2, 1, 0},
        {LayerKind::Relu, 0, 0, 1, 0},
        {LayerKind::MaxPool, 2, 0, 2, 0},
        {LayerKind::Conv2d, 3, 3, 1, 0},
        {LayerKind::Relu, 0, 0, 1, 0},
        {LayerKind::GlobalAvgPool, 0, 0, 1, 0},
        {LayerKind::Dense, 0, 0, 1, 4},
    };
    return spec;
}

template <typename T>
std::vector<T> random_input(const ModelSpec& spec, Rng& rng) {
    std::vector<T> x(static_cast<std::size_t>(spec.input_channels) * spec.input_h * spec.input_w);
    for (auto& v : x) v = static_cast<T>(rng.uniform_range(-2.0, 2.0));
    return x;
}

// Scalar objective L = sum_i g_i * y_i over the embedding y.
template <typename T>
double objective(const NetworkT<T>& net, const std::vector<T>& input,
                 const std::vector<double>& g) {
    const auto y = net.forward(input);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) acc += g[i] * static_cast<double>(y[i]);
    return acc;
}

double rel_err(double a, double b, double floor_v) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor_v});
}

} // namespace

TEST_CASE("embeddings are unit norm and deterministic in the seed") {
    const ModelSpec spec = tiny_spec();
    Rng rng(1);
    for (std::uint64_t seed : {1ULL, 7ULL, 23ULL}) {
        Network net(spec, seed);
        const auto x = random_input<float>(spec, rng);
        const auto y = net.forward(x);
        REQUIRE(static_cast<int>(y.size()) == spec.embedding_dim());
        double norm = 0.0;
        for (float v : y) norm += static_cast<double>(v) * v;
        CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));

        Network again(spec, seed);
        CHECK(again.forward(x) == y);
    }
    Network a(spec, 1), b(spec, 2);
    CHECK(a.params()[0].data != b.params()[0].data);
}

TEST_CASE("double-precision backward matches central finite differences") {
    const ModelSpec spec = tiny_spec();
    Rng rng(2);
    for (std::uint64_t seed : {3ULL, 11ULL}) {
        NetworkT<double> net(spec, seed);
        const auto x = random_input<double>(spec, rng);
        std::vector<double> g(static_cast<std::size_t>(spec.embedding_dim()));
        for (auto& v : g) v = rng.uniform_range(-1.0, 1.0);

        NetworkT<double>::Cache cache;
        net.forward(x, &cache);
        auto grads = net.zero_grads();
        net.backward(cache, std::vector<double>(g.begin(), g.end()), grads);

        const double h = 1e-6;
        double worst = 0.0;
        for (std::size_t p = 0; p < net.params().size(); ++p) {
            for (std::size_t i = 0; i < net.params()[p].data.size(); ++i) {
                const double orig = net.params()[p].data[i];
                net.params()[p].data[i] = orig + h;
                const double lp = objective(net, x, g);
                net.params()[p].data[i] = orig - h;
                const double lm = objective(net, x, g);
                net.params()[p].data[i] = orig;
                const double fd = (lp - lm) / (2.0 * h);
                worst = std::max(worst, rel_err(grads[p].data[i], fd, 1e-8));
            }
        }
        CHECK(worst < 1e-6);
    }
}

TEST_CASE("float backward matches the double-precision shadow network") {
    const ModelSpec spec = tiny_spec();
    Rng rng(3);
    for (std::uint64_t seed : {5ULL, 19ULL, 41ULL}) {
        Network fnet(spec, seed);

        // Exact float -> double parameter copy: same function, higher precision.
        std::vector<TensorT<double>> dparams;
        for (const auto& p : fnet.params()) {
            TensorT<double> t = TensorT<double>::zeros(p.shape);
            for (std::size_t i = 0; i < p.data.size(); ++i) t.data[i] = p.data[i];
            dparams.push_back(std::move(t));
        }
        NetworkT<double> dnet(spec, std::move(dparams));

        const auto xf = random_input<float>(spec, rng);
        const std::vector<double> xd(xf.begin(), xf.end());
        std::vector<float> gf(static_cast<std::size_t>(spec.embedding_dim()));
        for (auto& v : gf) v = static_cast<float>(rng.uniform_range(-1.0, 1.0));
        const std::vector<double> gd(gf.begin(), gf.end());

        Network::Cache fc;
        NetworkT<double>::Cache dc;
        const auto yf = fnet.forward(xf, &fc);
        const auto yd = dnet.forward(xd, &dc);
        for (std::size_t i = 0; i < yf.size(); ++i)
            CHECK(static_cast<double>(yf[i]) == doctest::Approx(yd[i]).epsilon(1e-4));

        auto gradsf = fnet.zero_grads();
        auto gradsd = dnet.zero_grads();
        fnet.backward(fc, gf, gradsf);
        dnet.backward(dc, gd, gradsd);
        double worst = 0.0;
        for (std::size_t p = 0; p < gradsf.size(); ++p)
            for (std::size_t i = 0; i < gradsf[p].data.size(); ++i)
                worst = std::max(worst, rel_err(gradsf[p].data[i], gradsd[p].data[i], 1e-2));
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("degenerate head emits a fixed unit vector with zero gradient") {
    ModelSpec spec;
    spec.input_channels = 1;
    spec.input_h = 2;
    spec.input_w = 2;
    spec.layers = {{LayerKind::GlobalAvgPool, 0, 0, 1, 0}, {LayerKind::Dense, 0, 0, 1, 3}};
    Network net(spec, 1);
    for (auto& p : net.params()) std::fill(p.data.begin(), p.data.end(), 0.0f);

    Network::Cache cache;
    const auto y = net.forward({1.0f, 2.0f, 3.0f, 4.0f}, &cache);
    CHECK(cache.degenerate);
    CHECK(y == std::vector<float>{1.0f, 0.0f, 0.0f});

    auto grads = net.zero_grads();
    net.backward(cache, {1.0f, 1.0f, 1.0f}, grads);
    for (const auto& g : grads)
        for (float v : g.data) CHECK(v == 0.0f);
}

TEST_CASE("normalization backward is orthogonal to the embedding") {
    // dL/dh = (g - y (y.g)) / ||h|| lies in the tangent space of the sphere,
    // so moving h along its own direction must not change y to first order.
    const ModelSpec spec = tiny_spec();
    Network net(spec, 9);
    Rng rng(9);
    const auto x = random_input<float>(spec, rng);
    Network::Cache cache;
    const auto y = net.forward(x, &cache);

    // Gradient through the head equals the embedding itself -> tangent is 0.
    std::vector<float> g(y.begin(), y.end());
    auto grads = net.zero_grads();
    net.backward(cache, g, grads);
    // The final dense bias gradient is exactly the head-space gradient.
    const auto& dbias = grads.back();
    double norm = 0.0;
    for (float v : dbias.data) norm += static_cast<double>(v) * v;
    CHECK(std::sqrt(norm) < 1e-6);
}

TEST_CASE("model spec validation") {
    ModelSpec spec = tiny_spec();
    CHECK_NOTHROW(spec.validate());
    CHECK(spec.embedding_dim() == 4);

    spec.layers.pop_back();
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    spec = tiny_spec();
    spec.input_h = 1; // pooling collapses the map to zero rows
    CHECK_THROWS_AS(Network(spec, 1), ConfigError);

    const ModelSpec def = ModelSpec::default_spec();
    CHECK_NOTHROW(def.validate());
    CHECK(def.embedding_dim() == 128);
    CHECK(def.input_h == 64);
    CHECK(def.input_w == 96);

    CHECK_THROWS_AS(Network(tiny_spec(), std::vector<Tensor>{}), ConfigError);
}

TEST_CASE("adam step matches the closed-form update") {
    std::vector<Tensor> params{Tensor::zeros({2})};
    params[0].data = {1.0f, -2.0f};
    std::vector<Tensor> grads{Tensor::zeros({2})};
    grads[0].data = {0.5f, -0.25f};

    auto st = AdamState::init_like(params, 1e-3);
    adam_step(params, grads, st);
    CHECK(st.step == 1);
    // After one step, m-hat = g and v-hat = g^2, so the update is
    // lr * g / (|g| + eps) regardless of the gradient scale.
    for (std::size_t i = 0; i < 2; ++i) {
        const double g = grads[0].data[i];
        const double expect =
            (i == 0 ? 1.0 : -2.0) - 1e-3 * g / (std::sqrt(g * g) + 1e-8);
        CHECK(params[0].data[i] == doctest::Approx(expect).epsilon(1e-6));
    }

    // Second step with the same gradient keeps moving in -sign(g).
    const auto before = params[0].data;
    adam_step(params, grads, st);
    CHECK(params[0].data[0] < before[0]);
    CHECK(params[0].data[1] > before[1]);

    grads[0].data[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(params, grads, st), NumericError);

    std::vector<Tensor> wrong{Tensor::zeros({3})};
    CHECK_THROWS_AS(adam_step(wrong, grads, st), NumericError);
}

TEST_CASE("adam converges on a quadratic bowl") {
    std::vector<Tensor> params{Tensor::zeros({1})};
    params[0].data = {4.0f};
    auto st = AdamState::init_like(params, 0.05);
    for (int i = 0; i < 2000; ++i) {
        std::vector<Tensor> grads{Tensor::zeros({1})};
        grads[0].data = {2.0f * params[0].data[0]}; // d/dx x^2
        adam_step(params, grads, st);
    }
    CHECK(std::abs(params[0].data[0]) < 1e-2);
}
