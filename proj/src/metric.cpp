#include "tripletforge/metric.hpp"

#include <algorithm>

#include "tripletforge/threads.hpp"

namespace tripletforge {

double default_learning_rate(bool mining) { return mining ? 1e-4 : 1e-6; }

bool mining_policy_for(const std::vector<TripletRecord>& triplets) {
    bool has_minable = false;
    bool has_unminable = false;
    for (const auto& t : triplets) {
        switch (t.source) {
        case TripletSource::Labeled:
        case TripletSource::Proximity:
            has_minable = true;
            break;
        case TripletSource::Noise:
        case TripletSource::Translation:
        case TripletSource::Mixing:
            has_unminable = true;
            break;
        }
    }
    // Joint streams (multiple sources) train with mining on; pure
    // noise/translation/mixing streams disable it.
    if (has_minable) return true;
    return has_minable || !has_unminable;
}

std::vector<std::vector<float>> embed_batch(const Network& net,
                                            const std::vector<ContextWindow>& log_windows) {
    std::vector<std::vector<float>> out(log_windows.size());
    parallel_for(log_windows.size(), [&](std::size_t i) {
        out[i] = net.forward(log_windows[i].cells);
    });
    return out;
}

namespace {

struct Batch {
    std::vector<TripletRecord> records;
    bool minable = false;
};

bool source_minable(TripletSource s) { return s != TripletSource::Mixing; }

// Greedy two-queue batching: order is preserved within a mining regime and
// each batch holds a single regime.
std::vector<Batch> assemble_batches(const std::vector<TripletRecord>& triplets,
                                    int batch_size) {
    std::vector<Batch> batches;
    Batch minable{{}, true};
    Batch unminable{{}, false};
    auto flush = [&batches, batch_size](Batch& b) {
        if (static_cast<int>(b.records.size()) >= batch_size) {
            batches.push_back(std::move(b));
            b.records.clear();
        }
    };
    for (const auto& t : triplets) {
        Batch& q = source_minable(t.source) ? minable : unminable;
        q.records.push_back(t);
        flush(q);
    }
    if (!minable.records.empty()) batches.push_back(std::move(minable));
    if (!unminable.records.empty()) batches.push_back(std::move(unminable));
    return batches;
}

} // namespace

TrainResult train(Network& net, const Dataset& data,
                  const std::vector<TripletRecord>& triplets, const TrainConfig& cfg) {
    if (triplets.empty()) throw ConfigError("training stream yields no triplets");
    if (cfg.loss.batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (cfg.loss.margin < 0.0) throw ConfigError("margin must be >= 0");

    const double lr =
        cfg.learning_rate > 0.0 ? cfg.learning_rate : default_learning_rate(cfg.loss.mining);
    AdamState opt = AdamState::init_like(net.params(), lr);
    opt.beta1 = cfg.adam_beta1;
    opt.beta2 = cfg.adam_beta2;
    opt.epsilon = cfg.adam_epsilon;

    const auto batches = assemble_batches(triplets, cfg.loss.batch_size);

    TrainResult result;
    std::vector<Tensor> last_good = net.params();
    long step = 0;
    for (std::size_t bi = 0; step < cfg.max_steps; bi = (bi + 1) % batches.size()) {
        const Batch& batch = batches[bi];
        const std::size_t b = batch.records.size();

        // Materialize and log-compress all windows of the batch.
        std::vector<ContextWindow> windows(3 * b);
        parallel_for(b, [&](std::size_t i) {
            MaterializedTriplet t = materialize_triplet(data, batch.records[i]);
            windows[3 * i + 0] = stabilized_log(t.anchor, cfg.log_offset);
            windows[3 * i + 1] = stabilized_log(t.positive, cfg.log_offset);
            windows[3 * i + 2] = stabilized_log(t.negative, cfg.log_offset);
        });

        std::vector<Network::Cache> caches(3 * b);
        std::vector<std::vector<float>> embeddings(3 * b);
        parallel_for(3 * b, [&](std::size_t i) {
            embeddings[i] = net.forward(windows[i].cells, &caches[i]);
        });

        // Per-pair negative assignment (identity unless mined).
        std::vector<std::size_t> neg_of(b);
        for (std::size_t i = 0; i < b; ++i) neg_of[i] = i;
        if (cfg.loss.mining && batch.minable && b >= 2) {
            std::vector<std::vector<float>> anchors(b), positives(b), negatives(b);
            for (std::size_t i = 0; i < b; ++i) {
                anchors[i] = embeddings[3 * i + 0];
                positives[i] = embeddings[3 * i + 1];
                negatives[i] = embeddings[3 * i + 2];
            }
            neg_of = semi_hard_mine(anchors, positives, negatives);
        }

        std::vector<EmbeddedTriplet> embedded(b);
        for (std::size_t i = 0; i < b; ++i) {
            embedded[i].anchor = embeddings[3 * i + 0];
            embedded[i].positive = embeddings[3 * i + 1];
            embedded[i].negative = embeddings[3 * neg_of[i] + 2];
        }
        const TripletLossResult loss = triplet_loss(embedded, cfg.loss.margin);
        const double mean_loss = loss.loss / static_cast<double>(b);
        if (!std::isfinite(mean_loss)) {
            net.params() = last_good;
            result.diverged = true;
            break;
        }
        last_good = net.params();

        // Accumulate embedding gradients per window (a mined negative can
        // serve several pairs), then backprop each contributing window.
        const std::size_t dim = static_cast<std::size_t>(net.embedding_dim());
        std::vector<std::vector<float>> window_grads(3 * b);
        const float inv_b = 1.0f / static_cast<float>(b);
        auto add_grad = [&](std::size_t w, const std::vector<float>& g) {
            if (window_grads[w].empty()) window_grads[w].assign(dim, 0.0f);
            for (std::size_t k = 0; k < dim; ++k) window_grads[w][k] += g[k] * inv_b;
        };
        for (std::size_t i = 0; i < b; ++i) {
            add_grad(3 * i + 0, loss.grads[i][0]);
            add_grad(3 * i + 1, loss.grads[i][1]);
            add_grad(3 * neg_of[i] + 2, loss.grads[i][2]);
        }

        std::vector<std::size_t> touched;
        for (std::size_t w = 0; w < 3 * b; ++w)
            if (!window_grads[w].empty()) touched.push_back(w);

        std::vector<std::vector<Tensor>> per_window(touched.size());
        parallel_for(touched.size(), [&](std::size_t k) {
            per_window[k] = net.zero_grads();
            net.backward(caches[touched[k]], window_grads[touched[k]], per_window[k]);
        });

        std::vector<Tensor> grads = net.zero_grads();
        for (const auto& g : per_window)
            for (std::size_t p = 0; p < grads.size(); ++p)
                for (std::size_t i = 0; i < grads[p].data.size(); ++i)
                    grads[p].data[i] += g[p].data[i];

        adam_step(net.params(), grads, opt);
        ++step;
        result.trace.push_back({step, mean_loss, loss.active_fraction});
    }
    result.steps = step;
    return result;
}

} // namespace tripletforge
