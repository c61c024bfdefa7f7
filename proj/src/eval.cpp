#include "tripletforge/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tripletforge/errors.hpp"
#include "tripletforge/threads.hpp"

namespace tripletforge {

namespace {

bool contains(const std::vector<int>& v, int c) {
    return std::find(v.begin(), v.end(), c) != v.end();
}

} // namespace

bool SegmentEmbedding::has_label(int c) const { return contains(labels, c); }
bool SegmentFeatures::has_label(int c) const { return contains(labels, c); }

std::vector<float> segment_embedding(const std::vector<std::vector<float>>& window_embeddings) {
    if (window_embeddings.empty())
        throw ConfigError("segment embedding requires at least one window");
    const std::size_t d = window_embeddings[0].size();
    std::vector<double> acc(d, 0.0);
    for (const auto& w : window_embeddings) {
        if (w.size() != d) throw NumericError("window embedding dimension mismatch");
        for (std::size_t i = 0; i < d; ++i) acc[i] += static_cast<double>(w[i]);
    }
    std::vector<float> out(d);
    for (std::size_t i = 0; i < d; ++i)
        out[i] = static_cast<float>(acc[i] / static_cast<double>(window_embeddings.size()));
    return out;
}

double cosine_distance(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw NumericError("cosine distance dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
        na += static_cast<double>(a[i]) * static_cast<double>(a[i]);
        nb += static_cast<double>(b[i]) * static_cast<double>(b[i]);
    }
    const double denom = std::max(std::sqrt(na) * std::sqrt(nb), 1e-12);
    return std::clamp(1.0 - dot / denom, 0.0, 2.0);
}

std::vector<ClassTrialSet> build_qbe_trials(const std::vector<SegmentEmbedding>& segments,
                                            int n_classes, int per_class, std::uint64_t seed,
                                            std::vector<std::string>* warnings) {
    if (per_class < 2) throw ConfigError("per-class trial count must be >= 2");
    std::vector<ClassTrialSet> out;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<std::size_t> present, absent;
        for (std::size_t i = 0; i < segments.size(); ++i)
            (segments[i].has_label(c) ? present : absent).push_back(i);
        if (present.size() < 2) {
            if (warnings)
                warnings->push_back("class " + std::to_string(c) +
                                    " has fewer than 2 present segments; skipped");
            continue;
        }
        const int p = std::min<int>({per_class, static_cast<int>(present.size()),
                                     static_cast<int>(absent.size())});
        if (p < per_class && warnings)
            warnings->push_back("class " + std::to_string(c) + ": per-class P lowered to " +
                                std::to_string(p));
        if (p < 1) continue;

        Rng rng = Rng::fork(seed, {0x71BEULL, static_cast<std::uint64_t>(c)});
        auto sample = [&rng](std::vector<std::size_t>& pool, int count) {
            for (std::size_t i = pool.size(); i > 1; --i)
                std::swap(pool[i - 1], pool[rng.uniform_int(i)]);
            pool.resize(static_cast<std::size_t>(count));
        };
        sample(present, p);
        sample(absent, p);

        ClassTrialSet set;
        set.class_id = c;
        set.per_class = p;
        for (std::size_t i = 0; i < present.size(); ++i)
            for (std::size_t j = i + 1; j < present.size(); ++j) {
                const auto& a = segments[present[i]];
                const auto& b = segments[present[j]];
                set.trials.push_back(
                    {a.segment_id, b.segment_id, true, cosine_distance(a.vec, b.vec)});
            }
        for (const std::size_t i : present)
            for (const std::size_t j : absent) {
                const auto& a = segments[i];
                const auto& b = segments[j];
                set.trials.push_back(
                    {a.segment_id, b.segment_id, false, cosine_distance(a.vec, b.vec)});
            }
        out.push_back(std::move(set));
    }
    return out;
}

double average_precision(const std::vector<Trial>& trials) {
    std::size_t n_targets = 0;
    for (const auto& t : trials) n_targets += t.is_target ? 1 : 0;
    if (n_targets == 0) throw ConfigError("average precision undefined without target trials");

    std::vector<std::size_t> order(trials.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&trials](std::size_t a, std::size_t b) {
        return trials[a].distance < trials[b].distance;
    });

    double ap = 0.0;
    std::size_t hits = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank) {
        if (trials[order[rank]].is_target) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(rank + 1);
        }
    }
    return ap / static_cast<double>(n_targets);
}

double mean_average_precision(const std::vector<double>& per_class_ap) {
    if (per_class_ap.empty()) throw ConfigError("mAP over an empty class list");
    double acc = 0.0;
    for (double ap : per_class_ap) acc += ap;
    return acc / static_cast<double>(per_class_ap.size());
}

double gap_recovery(double baseline, double topline, double value) {
    if (!(topline > baseline)) throw ConfigError("gap recovery requires topline > baseline");
    return 100.0 * (value - baseline) / (topline - baseline);
}

ShallowClassifier::ShallowClassifier(int input_dim, int n_classes, const ClassifierSpec& spec,
                                     std::uint64_t seed)
    : input_dim_(input_dim), n_classes_(n_classes) {
    if (spec.hidden_layers < 1 || spec.hidden_layers > 2)
        throw ConfigError("classifier supports 1 or 2 hidden layers");
    if (spec.width < 1) throw ConfigError("classifier width must be >= 1");

    std::vector<int> dims{input_dim};
    for (int i = 0; i < spec.hidden_layers; ++i) dims.push_back(spec.width);
    dims.push_back(n_classes);

    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Layer layer;
        layer.in = dims[l];
        layer.units = dims[l + 1];
        layer.w.resize(static_cast<std::size_t>(layer.in) * layer.units);
        layer.b.assign(static_cast<std::size_t>(layer.units), 0.0f);
        Rng rng = Rng::fork(seed, {0xC1A55ULL, l});
        const double limit = std::sqrt(6.0 / layer.in);
        for (auto& v : layer.w) v = static_cast<float>(rng.uniform_range(-limit, limit));
        layers_.push_back(std::move(layer));
        mw_.push_back(std::vector<float>(layers_.back().w.size(), 0.0f));
        vw_.push_back(std::vector<float>(layers_.back().w.size(), 0.0f));
        mb_.push_back(std::vector<float>(layers_.back().b.size(), 0.0f));
        vb_.push_back(std::vector<float>(layers_.back().b.size(), 0.0f));
    }
}

std::vector<float> ShallowClassifier::forward(const std::vector<float>& x,
                                              std::vector<std::vector<float>>* acts) const {
    std::vector<float> cur = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        if (acts) acts->push_back(cur);
        const Layer& layer = layers_[l];
        std::vector<float> next(static_cast<std::size_t>(layer.units));
        for (int u = 0; u < layer.units; ++u) {
            const float* row = &layer.w[static_cast<std::size_t>(u) * layer.in];
            double acc = static_cast<double>(layer.b[static_cast<std::size_t>(u)]);
            for (int i = 0; i < layer.in; ++i)
                acc += static_cast<double>(row[i]) * static_cast<double>(cur[static_cast<std::size_t>(i)]);
            next[static_cast<std::size_t>(u)] = static_cast<float>(acc);
        }
        if (l + 1 < layers_.size())
            for (auto& v : next) v = v > 0.0f ? v : 0.0f;
        cur = std::move(next);
    }
    return cur; // logits
}

std::vector<float> ShallowClassifier::predict(const std::vector<float>& features) const {
    std::vector<float> logits = forward(features, nullptr);
    for (auto& v : logits) v = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(v))));
    return logits;
}

double ShallowClassifier::train_step(const std::vector<const std::vector<float>*>& features,
                                     const std::vector<std::vector<float>>& targets, double lr) {
    const std::size_t b = features.size();
    if (b == 0 || targets.size() != b) throw NumericError("classifier batch mismatch");

    std::vector<std::vector<float>> gw(layers_.size()), gb(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        gw[l].assign(layers_[l].w.size(), 0.0f);
        gb[l].assign(layers_[l].b.size(), 0.0f);
    }

    // Per-item forward/backward caches, reduced in item order afterwards.
    std::vector<double> losses(b, 0.0);
    std::vector<std::vector<std::vector<float>>> item_gw(b), item_gb(b);
    parallel_for(b, [&](std::size_t item) {
        std::vector<std::vector<float>> acts;
        std::vector<float> logits = forward(*features[item], &acts);
        auto& igw = item_gw[item];
        auto& igb = item_gb[item];
        igw.resize(layers_.size());
        igb.resize(layers_.size());
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            igw[l].assign(layers_[l].w.size(), 0.0f);
            igb[l].assign(layers_[l].b.size(), 0.0f);
        }

        // BCE over sigmoid logits: dL/dlogit = sigmoid(logit) - y.
        std::vector<float> grad(logits.size());
        double loss = 0.0;
        for (std::size_t k = 0; k < logits.size(); ++k) {
            const double z = static_cast<double>(logits[k]);
            const double y = static_cast<double>(targets[item][k]);
            const double p = 1.0 / (1.0 + std::exp(-z));
            loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
            grad[k] = static_cast<float>(p - y);
        }
        losses[item] = loss / static_cast<double>(logits.size());

        for (std::size_t l = layers_.size(); l-- > 0;) {
            const Layer& layer = layers_[l];
            const auto& in = acts[l];
            std::vector<float> din(static_cast<std::size_t>(layer.in), 0.0f);
            for (int u = 0; u < layer.units; ++u) {
                const float g = grad[static_cast<std::size_t>(u)];
                igb[l][static_cast<std::size_t>(u)] += g;
                const float* row = &layer.w[static_cast<std::size_t>(u) * layer.in];
                float* drow = &igw[l][static_cast<std::size_t>(u) * layer.in];
                for (int i = 0; i < layer.in; ++i) {
                    drow[i] += g * in[static_cast<std::size_t>(i)];
                    din[static_cast<std::size_t>(i)] += g * row[i];
                }
            }
            if (l > 0)
                for (std::size_t i = 0; i < din.size(); ++i)
                    if (acts[l][i] <= 0.0f) din[i] = 0.0f;
            grad = std::move(din);
        }
    });

    double mean_loss = 0.0;
    for (std::size_t item = 0; item < b; ++item) {
        mean_loss += losses[item];
        for (std::size_t l = 0; l < layers_.size(); ++l) {
            for (std::size_t i = 0; i < gw[l].size(); ++i) gw[l][i] += item_gw[item][l][i];
            for (std::size_t i = 0; i < gb[l].size(); ++i) gb[l][i] += item_gb[item][l][i];
        }
    }
    mean_loss /= static_cast<double>(b);
    const float inv_b = 1.0f / static_cast<float>(b);

    // Adam update.
    step_ += 1;
    const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(step_));
    auto update = [&](std::vector<float>& w, std::vector<float>& m, std::vector<float>& v,
                      const std::vector<float>& g) {
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = static_cast<double>(g[i]) * inv_b;
            const double mi = 0.9 * m[i] + 0.1 * gi;
            const double vi = 0.999 * v[i] + 0.001 * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            w[i] = static_cast<float>(w[i] - lr * (mi / bc1) / (std::sqrt(vi / bc2) + 1e-8));
        }
    };
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        update(layers_[l].w, mw_[l], vw_[l], gw[l]);
        update(layers_[l].b, mb_[l], vb_[l], gb[l]);
    }
    return mean_loss;
}

namespace {

std::vector<std::vector<float>> multi_hot_targets(const SegmentFeatures& seg, int n_classes) {
    std::vector<float> row(static_cast<std::size_t>(n_classes), 0.0f);
    for (int c : seg.labels)
        if (c >= 0 && c < n_classes) row[static_cast<std::size_t>(c)] = 1.0f;
    return std::vector<std::vector<float>>(seg.windows.size(), row);
}

} // namespace

ShallowClassifier train_shallow_classifier(const std::vector<SegmentFeatures>& train_segments,
                                           const std::vector<SegmentFeatures>& dev_segments,
                                           int n_classes, const ClassifierSpec& spec,
                                           const ClassifierTrainConfig& cfg) {
    if (train_segments.empty()) throw ConfigError("classifier training set is empty");
    const int input_dim = static_cast<int>(train_segments[0].windows.at(0).size());
    ShallowClassifier clf(input_dim, n_classes, spec, cfg.seed);

    // Flatten to window-level examples.
    std::vector<const std::vector<float>*> xs;
    std::vector<std::vector<float>> ys;
    for (const auto& seg : train_segments) {
        const auto targets = multi_hot_targets(seg, n_classes);
        for (std::size_t w = 0; w < seg.windows.size(); ++w) {
            xs.push_back(&seg.windows[w]);
            ys.push_back(targets[w]);
        }
    }

    Rng rng = Rng::fork(cfg.seed, {0x5C1AULL});
    std::vector<std::size_t> order(xs.size());
    std::iota(order.begin(), order.end(), 0);

    double best_map = -1.0;
    int since_best = 0;
    // Snapshot of the best state: cheapest faithful approach is to retrain
    // nothing and keep a copy of the classifier object.
    ShallowClassifier best = clf;

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<const std::vector<float>*> bx;
            std::vector<std::vector<float>> by;
            for (std::size_t i = start; i < end; ++i) {
                bx.push_back(xs[order[i]]);
                by.push_back(ys[order[i]]);
            }
            clf.train_step(bx, by, cfg.learning_rate);
        }

        if (!dev_segments.empty()) {
            const double dev_map = eval_classifier(clf, dev_segments).map;
            if (dev_map > best_map) {
                best_map = dev_map;
                best = clf;
                since_best = 0;
            } else if (++since_best >= cfg.patience) {
                return best;
            }
        }
    }
    return dev_segments.empty() ? clf : best;
}

ClassifierEval eval_classifier(const ShallowClassifier& clf,
                               const std::vector<SegmentFeatures>& eval_segments) {
    const int k = clf.n_classes();
    // Segment score = mean of window-level sigmoids.
    std::vector<std::vector<float>> scores(eval_segments.size());
    parallel_for(eval_segments.size(), [&](std::size_t s) {
        std::vector<double> acc(static_cast<std::size_t>(k), 0.0);
        for (const auto& w : eval_segments[s].windows) {
            const auto p = clf.predict(w);
            for (int c = 0; c < k; ++c) acc[static_cast<std::size_t>(c)] += p[static_cast<std::size_t>(c)];
        }
        scores[s].resize(static_cast<std::size_t>(k));
        for (int c = 0; c < k; ++c)
            scores[s][static_cast<std::size_t>(c)] = static_cast<float>(
                acc[static_cast<std::size_t>(c)] /
                static_cast<double>(eval_segments[s].windows.size()));
    });

    ClassifierEval out;
    std::vector<double> valid;
    for (int c = 0; c < k; ++c) {
        std::vector<Trial> trials;
        std::size_t present = 0;
        for (std::size_t s = 0; s < eval_segments.size(); ++s) {
            const bool target = eval_segments[s].has_label(c);
            present += target ? 1 : 0;
            trials.push_back({eval_segments[s].segment_id, 0, target,
                              -static_cast<double>(scores[s][static_cast<std::size_t>(c)])});
        }
        if (present == 0) {
            out.per_class_ap.push_back(std::nan(""));
            continue;
        }
        const double ap = average_precision(trials);
        out.per_class_ap.push_back(ap);
        valid.push_back(ap);
    }
    out.map = mean_average_precision(valid);
    return out;
}

double light_supervision_protocol(const std::vector<SegmentFeatures>& train_segments,
                                  const std::vector<SegmentFeatures>& dev_segments,
                                  const std::vector<SegmentFeatures>& eval_segments,
                                  int n_classes, int k_per_class, int n_trials,
                                  std::uint64_t seed, const ClassifierSpec& spec,
                                  const ClassifierTrainConfig& cfg,
                                  std::vector<std::string>* warnings) {
    double acc = 0.0;
    for (int trial = 0; trial < n_trials; ++trial) {
        Rng rng = Rng::fork(seed, {0x11A7ULL, static_cast<std::uint64_t>(trial)});
        std::vector<bool> picked(train_segments.size(), false);
        for (int c = 0; c < n_classes; ++c) {
            std::vector<std::size_t> pool;
            for (std::size_t s = 0; s < train_segments.size(); ++s)
                if (train_segments[s].has_label(c)) pool.push_back(s);
            if (static_cast<int>(pool.size()) < k_per_class && warnings)
                warnings->push_back("class " + std::to_string(c) + " has only " +
                                    std::to_string(pool.size()) +
                                    " labeled segments; using all of them");
            for (std::size_t i = pool.size(); i > 1; --i)
                std::swap(pool[i - 1], pool[rng.uniform_int(i)]);
            const std::size_t take =
                std::min<std::size_t>(pool.size(), static_cast<std::size_t>(k_per_class));
            for (std::size_t i = 0; i < take; ++i) picked[pool[i]] = true;
        }

        std::vector<SegmentFeatures> subset;
        for (std::size_t s = 0; s < train_segments.size(); ++s)
            if (picked[s]) subset.push_back(train_segments[s]);

        ClassifierTrainConfig trial_cfg = cfg;
        trial_cfg.seed = Rng::fork(seed, {0x11A8ULL, static_cast<std::uint64_t>(trial)}).next_u64();
        const ShallowClassifier clf =
            train_shallow_classifier(subset, dev_segments, n_classes, spec, trial_cfg);
        acc += eval_classifier(clf, eval_segments).map;
    }
    return acc / static_cast<double>(n_trials);
}

} // namespace tripletforge
