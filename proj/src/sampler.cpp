#include "tripletforge/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "tripletforge/errors.hpp"

namespace tripletforge {

namespace {

constexpr int kMaxResample = 100;

std::uint64_t ref_key(WindowRef r) {
    return (static_cast<std::uint64_t>(r.recording) << 32) | r.window;
}

std::size_t draw_other(const Dataset& data, std::size_t exclude, Rng& rng) {
    if (data.size() < 2) throw ConfigError("sampler needs at least 2 examples");
    std::size_t i = rng.uniform_int(data.size() - 1);
    if (i >= exclude) ++i;
    return i;
}

} // namespace

const char* triplet_source_name(TripletSource s) {
    switch (s) {
    case TripletSource::Labeled: return "labeled";
    case TripletSource::Noise: return "noise";
    case TripletSource::Translation: return "translation";
    case TripletSource::Mixing: return "mixing";
    case TripletSource::Proximity: return "proximity";
    }
    return "unknown";
}

bool Example::has_label(int c) const {
    return std::find(labels.begin(), labels.end(), c) != labels.end();
}

void SamplerConfig::validate(int n_mels) const {
    if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
    if (freq_shift_S < 0 || freq_shift_S >= n_mels)
        throw ConfigError("freq_shift_S must be in [0, F-1]");
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (!(delta_t_s > 0.0)) throw ConfigError("delta_t must be > 0");
    bool any = false;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("source weights must be nonnegative");
        if (w > 0.0) any = true;
    }
    if (!any) throw ConfigError("at least one source weight must be positive");
}

Dataset::Dataset(std::vector<Example> examples) : examples_(std::move(examples)) {
    for (std::size_t i = 0; i < examples_.size(); ++i) {
        const Example& e = examples_[i];
        ref_index_[ref_key(ref_of(e))] = i;
        auto [it, fresh] = by_recording_.try_emplace(e.recording);
        if (fresh) recording_ids_.push_back(e.recording);
        it->second.push_back(i);
    }
}

std::size_t Dataset::index_of(WindowRef ref) const {
    const auto it = ref_index_.find(ref_key(ref));
    if (it == ref_index_.end())
        throw IoError("triplet references a window not present in the dataset");
    return it->second;
}

std::vector<TripletRecord> sample_labeled(const Dataset& data, std::size_t n, Rng& rng,
                                          std::vector<std::string>* warnings) {
    if (data.size() == 0) throw ConfigError("labeled sampling on an empty dataset");

    std::set<int> all_classes;
    for (const auto& e : data.examples()) {
        if (!e.labeled) throw ConfigError("labeled sampling requires a labeled dataset");
        all_classes.insert(e.labels.begin(), e.labels.end());
    }

    // A class is usable if it has >= 2 members and >= 1 counter-example.
    struct ClassPool {
        int class_id;
        std::vector<std::size_t> members;
        std::vector<std::size_t> others;
    };
    std::vector<ClassPool> pools;
    for (int c : all_classes) {
        ClassPool p;
        p.class_id = c;
        for (std::size_t i = 0; i < data.size(); ++i)
            (data.at(i).has_label(c) ? p.members : p.others).push_back(i);
        if (p.members.size() < 2) {
            if (warnings)
                warnings->push_back("class " + std::to_string(c) +
                                    " has fewer than 2 examples; skipped");
            continue;
        }
        if (p.others.empty()) {
            if (warnings)
                warnings->push_back("class " + std::to_string(c) +
                                    " has no counter-examples; skipped");
            continue;
        }
        pools.push_back(std::move(p));
    }
    if (pools.empty()) throw ConfigError("no class is usable for labeled triplet sampling");

    std::vector<TripletRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const ClassPool& p = pools[rng.uniform_int(pools.size())];
        const std::size_t a_slot = rng.uniform_int(p.members.size());
        std::size_t pos_slot = rng.uniform_int(p.members.size() - 1);
        if (pos_slot >= a_slot) ++pos_slot;
        const std::size_t a = p.members[a_slot];
        const std::size_t pos = p.members[pos_slot];
        const std::size_t neg = p.others[rng.uniform_int(p.others.size())];

        TripletRecord rec;
        rec.source = TripletSource::Labeled;
        rec.anchor = Dataset::ref_of(data.at(a));
        rec.positive = Dataset::ref_of(data.at(pos));
        rec.negative = Dataset::ref_of(data.at(neg));
        rec.params[0] = static_cast<float>(p.class_id);
        out.push_back(rec);
    }
    return out;
}

std::vector<TripletRecord> sample_noise(const Dataset& data, std::size_t n, double sigma,
                                        Rng& rng) {
    if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
    std::vector<TripletRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = rng.uniform_int(data.size());
        const std::size_t neg = draw_other(data, a, rng);
        TripletRecord rec;
        rec.source = TripletSource::Noise;
        rec.transform_seed = rng.next_u64();
        rec.anchor = Dataset::ref_of(data.at(a));
        rec.positive = rec.anchor;
        rec.negative = Dataset::ref_of(data.at(neg));
        rec.params[0] = static_cast<float>(sigma);
        out.push_back(rec);
    }
    return out;
}

std::vector<TripletRecord> sample_translation(const Dataset& data, std::size_t n, int max_shift_S,
                                              Rng& rng) {
    if (data.size() == 0) throw ConfigError("translation sampling on an empty dataset");
    const int F = data.at(0).window.n_mels;
    const int T = data.at(0).window.n_frames;
    if (max_shift_S < 0 || max_shift_S >= F)
        throw ConfigError("frequency shift range S must satisfy 0 <= S <= F-1");

    std::vector<TripletRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = rng.uniform_int(data.size());
        const std::size_t neg = draw_other(data, a, rng);
        const int time_shift = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(T)));
        const int freq_shift =
            static_cast<int>(rng.uniform_int_range(-max_shift_S, max_shift_S));
        TripletRecord rec;
        rec.source = TripletSource::Translation;
        rec.anchor = Dataset::ref_of(data.at(a));
        rec.positive = rec.anchor;
        rec.negative = Dataset::ref_of(data.at(neg));
        rec.params[0] = static_cast<float>(time_shift);
        rec.params[1] = static_cast<float>(freq_shift);
        out.push_back(rec);
    }
    return out;
}

std::vector<TripletRecord> sample_mixing(const Dataset& data, std::size_t n, double alpha,
                                         Rng& rng) {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    std::vector<std::size_t> nonzero;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (total_energy(data.at(i).window) > 0.0) nonzero.push_back(i);
    if (nonzero.size() < 2)
        throw ConfigError("mixing needs at least 2 windows with positive energy");

    std::vector<TripletRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t a = nonzero[rng.uniform_int(nonzero.size())];
        std::size_t neg = a;
        int tries = 0;
        do {
            neg = nonzero[rng.uniform_int(nonzero.size())];
            if (++tries > kMaxResample)
                throw ConfigError("mixing could not find a distinct positive-energy negative");
        } while (neg == a);
        TripletRecord rec;
        rec.source = TripletSource::Mixing;
        rec.anchor = Dataset::ref_of(data.at(a));
        rec.positive = rec.anchor;
        rec.negative = Dataset::ref_of(data.at(neg));
        rec.params[0] = static_cast<float>(alpha);
        out.push_back(rec);
    }
    return out;
}

std::vector<TripletRecord> sample_proximity(const Dataset& data, std::size_t n, double delta_t_s,
                                            Rng& rng) {
    if (!(delta_t_s > 0.0)) throw ConfigError("delta_t must be > 0");
    if (data.recording_ids().size() < 2)
        throw ConfigError("proximity sampling needs at least 2 recordings");

    // Recordings where some pair of distinct windows lies within delta_t.
    struct RecPool {
        std::uint32_t recording;
        std::vector<std::size_t> windows;
    };
    std::vector<RecPool> qualifying;
    for (std::uint32_t rid : data.recording_ids()) {
        const auto& idx = data.by_recording().at(rid);
        bool ok = false;
        for (std::size_t i = 0; i + 1 < idx.size() && !ok; ++i)
            for (std::size_t j = i + 1; j < idx.size() && !ok; ++j)
                if (std::abs(data.at(idx[i]).start_time_s - data.at(idx[j]).start_time_s) <
                    delta_t_s)
                    ok = true;
        if (ok) qualifying.push_back({rid, idx});
    }
    if (qualifying.empty())
        throw ConfigError("no recording has two windows within delta_t");

    std::vector<TripletRecord> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const TripletRecord rec = [&] {
            for (int tries = 0; tries < kMaxResample; ++tries) {
                const RecPool& pool = qualifying[rng.uniform_int(qualifying.size())];
                const std::size_t a = pool.windows[rng.uniform_int(pool.windows.size())];
                std::vector<std::size_t> near;
                for (std::size_t w : pool.windows)
                    if (w != a && std::abs(data.at(w).start_time_s - data.at(a).start_time_s) <
                                      delta_t_s)
                        near.push_back(w);
                if (near.empty()) continue;
                const std::size_t p = near[rng.uniform_int(near.size())];
                std::size_t neg;
                int neg_tries = 0;
                do {
                    neg = rng.uniform_int(data.size());
                    if (++neg_tries > kMaxResample)
                        throw ConfigError("proximity could not find a cross-recording negative");
                } while (data.at(neg).recording == pool.recording);

                TripletRecord r;
                r.source = TripletSource::Proximity;
                r.anchor = Dataset::ref_of(data.at(a));
                r.positive = Dataset::ref_of(data.at(p));
                r.negative = Dataset::ref_of(data.at(neg));
                r.params[0] = static_cast<float>(delta_t_s);
                return r;
            }
            throw ConfigError("proximity sampling exhausted resampling budget");
        }();
        out.push_back(rec);
    }
    return out;
}

std::vector<TripletRecord> sample_joint(const Dataset& data, std::size_t n,
                                        const SamplerConfig& cfg, Rng& rng,
                                        std::vector<std::string>* warnings) {
    const int F = data.size() > 0 ? data.at(0).window.n_mels : kDefaultMels;
    cfg.validate(F);

    // Largest-remainder apportionment keeps per-source counts within +-1
    // of the exact proportional share.
    double total_w = 0.0;
    for (double w : cfg.weights) total_w += w;
    std::array<std::size_t, 5> counts{};
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 5; ++s) {
        const double exact = static_cast<double>(n) * cfg.weights[s] / total_w;
        counts[s] = static_cast<std::size_t>(std::floor(exact));
        assigned += counts[s];
        if (cfg.weights[s] > 0.0) remainders.push_back({exact - std::floor(exact), s});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned)
        counts[remainders[i % remainders.size()].second] += 1;

    std::vector<TripletRecord> out;
    out.reserve(n);
    auto append = [&out](std::vector<TripletRecord> v) {
        out.insert(out.end(), v.begin(), v.end());
    };
    if (counts[0] > 0) append(sample_labeled(data, counts[0], rng, warnings));
    if (counts[1] > 0) append(sample_noise(data, counts[1], cfg.sigma, rng));
    if (counts[2] > 0) append(sample_translation(data, counts[2], cfg.freq_shift_S, rng));
    if (counts[3] > 0) append(sample_mixing(data, counts[3], cfg.alpha, rng));
    if (counts[4] > 0) append(sample_proximity(data, counts[4], cfg.delta_t_s, rng));

    // Deterministic Fisher-Yates shuffle.
    for (std::size_t i = out.size(); i > 1; --i)
        std::swap(out[i - 1], out[rng.uniform_int(i)]);
    return out;
}

ContextWindow apply_noise(const ContextWindow& x, double sigma, std::uint64_t transform_seed) {
    ContextWindow out = x;
    Rng rng(transform_seed);
    for (auto& c : out.cells)
        c = static_cast<float>(static_cast<double>(c) * (1.0 + std::abs(sigma * rng.gaussian())));
    return out;
}

ContextWindow apply_translation(const ContextWindow& x, int time_shift, int freq_shift) {
    const int F = x.n_mels;
    const int T = x.n_frames;
    ContextWindow out = x;
    std::fill(out.cells.begin(), out.cells.end(), 0.0f);
    for (int f = 0; f < F; ++f) {
        const int src_f = f - freq_shift; // positive shift moves energy up in frequency
        if (src_f < 0 || src_f >= F) continue;
        for (int t = 0; t < T; ++t) out.at(f, (t + time_shift) % T) = x.at(src_f, t);
    }
    return out;
}

ContextWindow apply_mixing(const ContextWindow& anchor, const ContextWindow& negative,
                           double alpha) {
    const double ea = total_energy(anchor);
    const double en = total_energy(negative);
    if (!(en > 0.0)) throw NumericError("mixing negative has zero energy");
    const double scale = alpha * ea / en;
    ContextWindow out = anchor;
    for (std::size_t i = 0; i < out.cells.size(); ++i)
        out.cells[i] = static_cast<float>(static_cast<double>(anchor.cells[i]) +
                                          scale * static_cast<double>(negative.cells[i]));
    return out;
}

MaterializedTriplet materialize_triplet(const Dataset& data, const TripletRecord& rec) {
    MaterializedTriplet t;
    t.source = rec.source;
    t.anchor = data.at(data.index_of(rec.anchor)).window;
    t.negative = data.at(data.index_of(rec.negative)).window;
    switch (rec.source) {
    case TripletSource::Labeled:
    case TripletSource::Proximity:
        t.positive = data.at(data.index_of(rec.positive)).window;
        break;
    case TripletSource::Noise:
        t.positive = apply_noise(t.anchor, rec.params[0], rec.transform_seed);
        break;
    case TripletSource::Translation:
        t.positive = apply_translation(t.anchor, static_cast<int>(rec.params[0]),
                                       static_cast<int>(rec.params[1]));
        break;
    case TripletSource::Mixing:
        t.positive = apply_mixing(t.anchor, t.negative, rec.params[0]);
        break;
    }
    return t;
}

} // namespace tripletforge
