#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tripletforge/errors.hpp"
#include "tripletforge/metric.hpp"
#include "tripletforge/rng.hpp"
#include "tripletforge/threads.hpp"

using namespace tripletforge;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t d) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.uniform_range(-1.0, 1.0);
    return v;
}

// Independent reimplementation of the mining rule, written as a direct
// transcription: pick the smallest d(a_i, n_j) strictly greater than
// d(a_i, p_i); ties go to the smallest j; fall back to j = i.
template <typename T>
std::vector<std::size_t> mine_reference(const std::vector<std::vector<T>>& a,
                                        const std::vector<std::vector<T>>& p,
                                        const std::vector<std::vector<T>>& n) {
    std::vector<std::size_t> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        double dp = 0.0;
        for (std::size_t k = 0; k < a[i].size(); ++k) {
            const double d = static_cast<double>(a[i][k]) - static_cast<double>(p[i][k]);
            dp += d * d;
        }
        std::size_t chosen = i;
        double chosen_d = 0.0;
        bool found = false;
        for (std::size_t j = 0; j < n.size(); ++j) {
            double dn = 0.0;
            for (std::size_t k = 0; k < a[i].size(); ++k) {
                const double d = static_cast<double>(a[i][k]) - static_cast<double>(n[j][k]);
                dn += d * d;
            }
            if (dn > dp && (!found || dn < chosen_d)) {
                found = true;
                chosen = j;
                chosen_d = dn;
            }
        }
        out[i] = chosen;
    }
    return out;
}

ContextWindow window_from(Rng& rng, int F, int T, std::uint32_t rec, std::uint32_t idx) {
    ContextWindow w;
    w.n_mels = F;
    w.n_frames = T;
    w.recording_id = rec;
    w.cells.resize(static_cast<std::size_t>(F) * T);
    for (auto& c : w.cells) c = static_cast<float>(rng.uniform_range(0.0, 4.0));
    return w;
}

Dataset train_dataset(int F, int T) {
    Rng rng(33);
    std::vector<Example> examples;
    for (std::uint32_t rec = 0; rec < 4; ++rec) {
        const int cls = static_cast<int>(rec % 2);
        for (std::uint32_t k = 0; k < 4; ++k) {
            Example e;
            e.window = window_from(rng, F, T, rec, k);
            // Concentrate energy in class-specific rows so the classes are
            // separable and the loss has room to fall.
            for (int f = cls * F / 2; f < (cls + 1) * F / 2; ++f)
                for (int t = 0; t < T; ++t) e.window.at(f, t) += 6.0f;
            e.recording = rec;
            e.window_index = k;
            e.start_time_s = 0.96 * k;
            e.labeled = true;
            e.labels = {cls};
            examples.push_back(std::move(e));
        }
    }
    return Dataset(std::move(examples));
}

ModelSpec train_spec(int F, int T) {
    ModelSpec spec;
    spec.input_channels = 1;
    spec.input_h = F;
    spec.input_w = T;
    spec.layers = {
        {LayerKind::Conv2d, 3, 2, 1, 0},
        {LayerKind::Relu, 0, 0, 1, 0},
        {LayerKind::GlobalAvgPool, 0, 0, 1, 0},
        {LayerKind::Dense, 0, 0, 1, 4},
    };
    return spec;
}

} // namespace

TEST_CASE("triplet loss closed-form cases") {
    // Coincident triplet: both distances vanish, only the margin remains.
    EmbeddedTripletT<double> same;
    same.anchor = same.positive = same.negative = {0.6, 0.8};
    auto r = triplet_loss<double>({same}, 0.1);
    CHECK(r.loss == doctest::Approx(0.1));
    CHECK(r.active_fraction == 1.0);
    for (const auto& g : r.grads[0])
        for (double v : g) CHECK(v == 0.0);

    // Positive on the anchor, negative antipodal: maximally satisfied.
    EmbeddedTripletT<double> easy;
    easy.anchor = easy.positive = {1.0, 0.0};
    easy.negative = {-1.0, 0.0};
    r = triplet_loss<double>({easy}, 0.1);
    CHECK(r.loss == 0.0);
    CHECK(r.active_fraction == 0.0);

    // Hand-computed active case in 1-d.
    EmbeddedTripletT<double> hard;
    hard.anchor = {0.0};
    hard.positive = {1.0};
    hard.negative = {0.5};
    // ||a-p||^2 = 1, ||a-n||^2 = 0.25 -> 1 - 0.25 + 0.1 = 0.85
    r = triplet_loss<double>({hard, easy}, 0.1);
    CHECK(r.loss == doctest::Approx(0.85));
    CHECK(r.active_fraction == 0.5);
    CHECK(r.grads[0][0][0] == doctest::Approx(2.0 * (0.5 - 1.0)));
    CHECK(r.grads[0][1][0] == doctest::Approx(-2.0 * (0.0 - 1.0)));
    CHECK(r.grads[0][2][0] == doctest::Approx(2.0 * (0.0 - 0.5)));

    EmbeddedTripletT<double> bad = easy;
    bad.anchor[0] = std::nan("");
    CHECK_THROWS_AS(triplet_loss<double>({bad}, 0.1), NumericError);
}

TEST_CASE("triplet loss gradients match central finite differences") {
    Rng rng(44);
    const std::size_t d = 5;
    const double h = 1e-6;
    int checked = 0;
    for (int trial = 0; trial < 200; ++trial) {
        EmbeddedTripletT<double> t;
        t.anchor = random_vec(rng, d);
        t.positive = random_vec(rng, d);
        t.negative = random_vec(rng, d);
        const double arg = squared_distance(t.anchor, t.positive) -
                           squared_distance(t.anchor, t.negative) + 0.1;
        if (std::abs(arg) < 1e-3) continue; // keep clear of the kink
        const auto r = triplet_loss<double>({t}, 0.1);

        std::vector<double>* parts[3] = {&t.anchor, &t.positive, &t.negative};
        for (int part = 0; part < 3; ++part) {
            for (std::size_t k = 0; k < d; ++k) {
                const double orig = (*parts[part])[k];
                (*parts[part])[k] = orig + h;
                const double lp = triplet_loss<double>({t}, 0.1).loss;
                (*parts[part])[k] = orig - h;
                const double lm = triplet_loss<double>({t}, 0.1).loss;
                (*parts[part])[k] = orig;
                const double fd = (lp - lm) / (2.0 * h);
                CHECK(r.grads[0][static_cast<std::size_t>(part)][k] ==
                      doctest::Approx(fd).epsilon(1e-5));
            }
        }
        ++checked;
    }
    CHECK(checked > 150);
}

TEST_CASE("semi-hard mining agrees with the brute-force oracle") {
    const std::size_t B = 16, d = 8;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        Rng rng(seed);
        std::vector<std::vector<double>> a(B), p(B), n(B);
        for (std::size_t i = 0; i < B; ++i) {
            a[i] = random_vec(rng, d);
            p[i] = random_vec(rng, d);
            n[i] = random_vec(rng, d);
        }
        CHECK(semi_hard_mine(a, p, n) == mine_reference(a, p, n));
    }
}

TEST_CASE("semi-hard mining tie-break and fallback") {
    // Anchor at origin, positive at distance 1. Negatives at equal distance
    // 2 tie; the lowest index must win.
    std::vector<std::vector<double>> a = {{0.0, 0.0}};
    std::vector<std::vector<double>> p = {{1.0, 0.0}};
    {
        std::vector<std::vector<double>> n = {{2.0, 0.0}};
        std::vector<std::vector<double>> a2 = {a[0], a[0]};
        std::vector<std::vector<double>> p2 = {p[0], p[0]};
        std::vector<std::vector<double>> n2 = {{0.0, 2.0}, {2.0, 0.0}};
        const auto chosen = semi_hard_mine(a2, p2, n2);
        CHECK(chosen[0] == 0);
        CHECK(chosen[1] == 0);
    }
    {
        // Every negative is closer than the positive: keep the original.
        std::vector<std::vector<double>> n = {{0.1, 0.0}};
        CHECK(semi_hard_mine(a, p, n) == std::vector<std::size_t>{0});
    }
    {
        // The qualifying negative that is closest to the anchor wins over a
        // farther one.
        std::vector<std::vector<double>> a2 = {a[0]};
        std::vector<std::vector<double>> p2 = {p[0]};
        std::vector<std::vector<double>> n2 = {{5.0, 0.0}};
        std::vector<std::vector<double>> a3 = {a[0], a[0]};
        std::vector<std::vector<double>> p3 = {p[0], p[0]};
        std::vector<std::vector<double>> n3 = {{5.0, 0.0}, {1.5, 0.0}};
        const auto chosen = semi_hard_mine(a3, p3, n3);
        CHECK(chosen[0] == 1);
    }
    CHECK_THROWS_AS(semi_hard_mine(a, p, {}), NumericError);
}

TEST_CASE("mining policy and default learning rates") {
    CHECK(default_learning_rate(true) == 1e-4);
    CHECK(default_learning_rate(false) == 1e-6);

    std::vector<TripletRecord> recs(4);
    recs[0].source = TripletSource::Labeled;
    recs[1].source = TripletSource::Proximity;
    recs[2].source = TripletSource::Labeled;
    recs[3].source = TripletSource::Proximity;
    CHECK(mining_policy_for(recs));

    recs[1].source = TripletSource::Noise;
    CHECK(mining_policy_for(recs)); // mixed stream counts as joint

    for (auto& r : recs) r.source = TripletSource::Translation;
    CHECK_FALSE(mining_policy_for(recs));
    for (auto& r : recs) r.source = TripletSource::Mixing;
    CHECK_FALSE(mining_policy_for(recs));
}

TEST_CASE("training runs, logs a trace, and reduces the loss") {
    const int F = 8, T = 6;
    const Dataset data = train_dataset(F, T);
    Rng rng(55);
    auto triplets = sample_labeled(data, 256, rng);

    TrainConfig cfg;
    cfg.loss.batch_size = 16;
    cfg.loss.mining = true;
    cfg.learning_rate = 1e-3;
    cfg.max_steps = 60;
    cfg.seed = 5;

    Network net(train_spec(F, T), 5);
    const auto result = train(net, data, triplets, cfg);
    CHECK_FALSE(result.diverged);
    CHECK(result.steps == 60);
    REQUIRE(result.trace.size() == 60);
    CHECK(result.trace.front().step == 1);
    CHECK(result.trace.back().step == 60);
    for (const auto& row : result.trace) {
        CHECK(row.loss >= 0.0);
        CHECK(row.active_fraction >= 0.0);
        CHECK(row.active_fraction <= 1.0);
    }

    double early = 0.0, late = 0.0;
    for (int i = 0; i < 10; ++i) {
        early += result.trace[static_cast<std::size_t>(i)].loss;
        late += result.trace[result.trace.size() - 1 - static_cast<std::size_t>(i)].loss;
    }
    CHECK(late < early);
}

TEST_CASE("training is bitwise deterministic across thread counts") {
    const int F = 8, T = 6;
    const Dataset data = train_dataset(F, T);
    Rng rng(66);
    auto triplets = sample_labeled(data, 64, rng);

    TrainConfig cfg;
    cfg.loss.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.max_steps = 12;
    cfg.seed = 9;

    auto run = [&](int threads) {
        set_thread_count(threads);
        Network net(train_spec(F, T), 9);
        train(net, data, triplets, cfg);
        return net.params();
    };
    const auto p1 = run(1);
    const auto p4 = run(4);
    set_thread_count(0);
    REQUIRE(p1.size() == p4.size());
    for (std::size_t i = 0; i < p1.size(); ++i) CHECK(p1[i].data == p4[i].data);
}

TEST_CASE("embed_batch matches per-window forward passes") {
    const int F = 8, T = 6;
    const Dataset data = train_dataset(F, T);
    Network net(train_spec(F, T), 2);

    std::vector<ContextWindow> logs;
    for (const auto& e : data.examples()) logs.push_back(stabilized_log(e.window, 0.01));
    const auto embs = embed_batch(net, logs);
    REQUIRE(embs.size() == logs.size());
    for (std::size_t i = 0; i < logs.size(); ++i) {
        const std::vector<float> direct = net.forward(
            std::vector<float>(logs[i].cells.begin(), logs[i].cells.end()));
        CHECK(embs[i] == direct);
    }
}
