#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "tripletforge/errors.hpp"
#include "tripletforge/nn.hpp"
#include "tripletforge/sampler.hpp"

namespace tripletforge {

struct TripletLossConfig {
    double margin = 0.1;
    bool mining = true;
    int batch_size = 64;
};

template <typename T>
double squared_distance(const std::vector<T>& a, const std::vector<T>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

template <typename T>
struct EmbeddedTripletT {
    std::vector<T> anchor;
    std::vector<T> positive;
    std::vector<T> negative;
};

using EmbeddedTriplet = EmbeddedTripletT<float>;

template <typename T>
struct TripletLossResultT {
    double loss = 0.0;            // Eq-style sum over the batch
    double active_fraction = 0.0; // triplets with a positive hinge argument
    // d(loss)/d(anchor|positive|negative) per triplet
    std::vector<std::array<std::vector<T>, 3>> grads;
};

using TripletLossResult = TripletLossResultT<float>;

// Hinge over ||a-p||^2 - ||a-n||^2 + margin, summed over the batch.
// Subgradient at the kink is 0.
template <typename T>
TripletLossResultT<T> triplet_loss(const std::vector<EmbeddedTripletT<T>>& batch,
                                   double margin) {
    TripletLossResultT<T> out;
    out.grads.resize(batch.size());
    std::size_t active = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& t = batch[i];
        for (const auto* v : {&t.anchor, &t.positive, &t.negative})
            for (const T x : *v)
                if (!std::isfinite(static_cast<double>(x)))
                    throw NumericError("non-finite embedding in triplet loss");

        const double arg =
            squared_distance(t.anchor, t.positive) - squared_distance(t.anchor, t.negative) +
            margin;
        const std::size_t d = t.anchor.size();
        auto& g = out.grads[i];
        for (auto& v : g) v.assign(d, T(0));
        if (arg > 0.0) {
            out.loss += arg;
            ++active;
            for (std::size_t k = 0; k < d; ++k) {
                // d/da = 2(n - p), d/dp = -2(a - p), d/dn = 2(a - n)
                g[0][k] = T(2) * (t.negative[k] - t.positive[k]);
                g[1][k] = T(-2) * (t.anchor[k] - t.positive[k]);
                g[2][k] = T(2) * (t.anchor[k] - t.negative[k]);
            }
        }
    }
    out.active_fraction =
        batch.empty() ? 0.0 : static_cast<double>(active) / static_cast<double>(batch.size());
    return out;
}

// Within-batch semi-hard reassignment: for each anchor-positive pair choose
// the candidate negative closest to the anchor among those still farther
// than the positive. Candidates are the batch's sampled negatives. Ties
// break toward the lowest candidate index; with no qualifying candidate the
// originally sampled negative (index i) is kept.
template <typename T>
std::vector<std::size_t> semi_hard_mine(const std::vector<std::vector<T>>& anchors,
                                        const std::vector<std::vector<T>>& positives,
                                        const std::vector<std::vector<T>>& negatives) {
    if (anchors.size() != positives.size() || anchors.size() != negatives.size())
        throw NumericError("semi_hard_mine batch size mismatch");
    const std::size_t n = anchors.size();
    std::vector<std::size_t> chosen(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double dp = squared_distance(anchors[i], positives[i]);
        double best = 0.0;
        std::size_t best_j = n;
        for (std::size_t j = 0; j < n; ++j) {
            const double dn = squared_distance(anchors[i], negatives[j]);
            if (dn > dp && (best_j == n || dn < best)) {
                best = dn;
                best_j = j;
            }
        }
        chosen[i] = best_j == n ? i : best_j;
    }
    return chosen;
}

struct TrainConfig {
    TripletLossConfig loss;
    double learning_rate = 0.0; // 0 resolves from the mining policy
    long max_steps = 1000;
    double log_offset = 0.01;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
};

struct TraceRow {
    long step = 0;
    double loss = 0.0; // batch mean of the per-triplet hinge terms
    double active_fraction = 0.0;
};

struct TrainResult {
    std::vector<TraceRow> trace;
    long steps = 0;
    bool diverged = false;
};

// Default policy: mining on with lr 1e-4 for labeled/proximity/joint streams,
// mining off with lr 1e-6 otherwise.
double default_learning_rate(bool mining);
bool mining_policy_for(const std::vector<TripletRecord>& triplets);

// Runs the triplet stream through the network. Energy-domain windows are
// materialized per batch, passed through the stabilized log, embedded, and
// optimized with Adam. Batches are grouped so mixing triplets are never
// re-mined. On divergence the last finite parameter state is restored.
TrainResult train(Network& net, const Dataset& data,
                  const std::vector<TripletRecord>& triplets, const TrainConfig& cfg);

// Log-domain batch embedding.
std::vector<std::vector<float>> embed_batch(const Network& net,
                                            const std::vector<ContextWindow>& log_windows);

} // namespace tripletforge
