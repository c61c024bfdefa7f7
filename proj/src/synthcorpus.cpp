#include "tripletforge/synthcorpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "tripletforge/errors.hpp"
#include "tripletforge/rng.hpp"

namespace tripletforge {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kRampSeconds = 0.02;

double overlap_seconds(double a_lo, double a_hi, double b_lo, double b_hi) {
    return std::max(0.0, std::min(a_hi, b_hi) - std::max(a_lo, b_lo));
}

} // namespace

const char* event_family_name(EventFamily f) {
    switch (f) {
    case EventFamily::Tone: return "tone";
    case EventFamily::ChirpUp: return "chirp-up";
    case EventFamily::ChirpDown: return "chirp-down";
    case EventFamily::HarmonicStack: return "harmonic-stack";
    case EventFamily::AmNoiseBurst: return "am-noise-burst";
    case EventFamily::ClickTrain: return "click-train";
    }
    return "unknown";
}

const char* split_name(Split s) {
    switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Eval: return "eval";
    }
    return "unknown";
}

Split split_from_name(const std::string& name) {
    if (name == "train") return Split::Train;
    if (name == "dev") return Split::Dev;
    if (name == "eval") return Split::Eval;
    throw IoError("unknown split name: " + name);
}

void CorpusConfig::validate() const {
    if (n_classes < 2) throw ConfigError("corpus needs at least 2 classes");
    if (n_recordings < 10) throw ConfigError("corpus needs at least 10 recordings");
    if (duration_s < 2.0 * 0.96)
        throw ConfigError("recording duration must cover at least 2 context windows");
    if (min_events < 1 || max_events < min_events)
        throw ConfigError("invalid event count range");
    if (!(min_event_s > 0.0 && max_event_s >= min_event_s))
        throw ConfigError("invalid event duration range");
    if (pool_min < 1 || pool_max < pool_min || pool_max > n_classes)
        throw ConfigError("invalid class pool size range");
    if (!(label_overlap > 0.0 && label_overlap <= 1.0))
        throw ConfigError("label_overlap must be in (0, 1]");
    if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
}

std::vector<std::pair<int, int>> CorpusConfig::effective_affinity() const {
    if (!affinity_edges.empty()) return affinity_edges;
    std::vector<std::pair<int, int>> ring;
    for (int i = 0; i < n_classes; ++i) ring.push_back({i, (i + 1) % n_classes});
    return ring;
}

std::vector<EventClass> default_classes(int k) {
    // Base parameter table over the six families; later cycles scale the
    // fundamentals so every class has a distinct parameter tuple.
    const EventClass base[] = {
        {0, EventFamily::Tone, 440.0, 0.0, 0.0},
        {0, EventFamily::ChirpUp, 300.0, 2.0, 0.0},
        {0, EventFamily::ChirpDown, 2400.0, 2.0, 0.0},
        {0, EventFamily::HarmonicStack, 220.0, 0.0, 0.0},
        {0, EventFamily::AmNoiseBurst, 0.0, 0.0, 4.0},
        {0, EventFamily::ClickTrain, 2500.0, 0.0, 8.0},
    };
    std::vector<EventClass> out;
    out.reserve(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        EventClass c = base[i % 6];
        const int cycle = i / 6;
        c.class_id = i;
        // Keep same-family classes far enough apart on the mel axis that
        // moderate frequency shifts cannot map one onto another.
        const double scale = std::pow(3.2, cycle);
        c.fundamental_hz *= scale;
        if (c.mod_rate_hz > 0.0) c.mod_rate_hz *= std::pow(2.2, cycle);
        out.push_back(c);
    }
    return out;
}

CorpusManifest generate_corpus(const CorpusConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    CorpusManifest m;
    m.classes = default_classes(cfg.n_classes);

    const auto edges = cfg.effective_affinity();
    std::vector<std::vector<int>> neighbors(static_cast<std::size_t>(cfg.n_classes));
    for (auto [a, b] : edges) {
        if (a < 0 || b < 0 || a >= cfg.n_classes || b >= cfg.n_classes)
            throw ConfigError("affinity edge references an unknown class");
        neighbors[static_cast<std::size_t>(a)].push_back(b);
        neighbors[static_cast<std::size_t>(b)].push_back(a);
    }

    m.recordings.reserve(static_cast<std::size_t>(cfg.n_recordings));
    for (int r = 0; r < cfg.n_recordings; ++r) {
        Rng rng = Rng::fork(seed, {1, static_cast<std::uint64_t>(r)});
        RecordingScript script;
        script.recording_id = static_cast<std::uint32_t>(r);
        char name[32];
        std::snprintf(name, sizeof(name), "rec_%05d.wav", r);
        script.path = name;
        script.duration_s = cfg.duration_s;
        script.background_snr_db = rng.uniform_range(cfg.snr_lo_db, cfg.snr_hi_db);

        // Grow the class pool along affinity edges from a random seed class.
        const int pool_size =
            static_cast<int>(rng.uniform_int_range(cfg.pool_min, cfg.pool_max));
        std::vector<int> pool{static_cast<int>(rng.uniform_int(
            static_cast<std::uint64_t>(cfg.n_classes)))};
        while (static_cast<int>(pool.size()) < pool_size) {
            std::vector<int> frontier;
            for (int c : pool)
                for (int nb : neighbors[static_cast<std::size_t>(c)])
                    if (std::find(pool.begin(), pool.end(), nb) == pool.end())
                        frontier.push_back(nb);
            int next;
            if (frontier.empty()) {
                do {
                    next = static_cast<int>(
                        rng.uniform_int(static_cast<std::uint64_t>(cfg.n_classes)));
                } while (std::find(pool.begin(), pool.end(), next) != pool.end());
            } else {
                next = frontier[rng.uniform_int(frontier.size())];
            }
            pool.push_back(next);
        }
        script.class_pool = pool;

        const int n_events =
            static_cast<int>(rng.uniform_int_range(cfg.min_events, cfg.max_events));
        for (int e = 0; e < n_events; ++e) {
            Event ev;
            ev.class_id = pool[rng.uniform_int(pool.size())];
            ev.duration_s = rng.uniform_range(cfg.min_event_s,
                                              std::min(cfg.max_event_s, cfg.duration_s));
            ev.onset_s = rng.uniform_range(0.0, cfg.duration_s - ev.duration_s);
            ev.gain = rng.uniform_range(cfg.min_gain, cfg.max_gain);
            script.events.push_back(ev);
        }
        m.recordings.push_back(std::move(script));
    }

    // Global feasibility check; the per-split check runs after splitting.
    const double win = 0.96;
    std::vector<int> counts(static_cast<std::size_t>(cfg.n_classes), 0);
    for (const auto& rec : m.recordings) {
        const int n_windows = static_cast<int>(rec.duration_s / win);
        for (int k = 0; k < n_windows; ++k)
            for (int c : labels_for_window(rec.events, k * win, win, cfg.label_overlap))
                counts[static_cast<std::size_t>(c)] += 1;
    }
    for (int c = 0; c < cfg.n_classes; ++c)
        if (counts[static_cast<std::size_t>(c)] < cfg.min_segments)
            throw ConfigError("class " + std::to_string(c) + " has only " +
                              std::to_string(counts[static_cast<std::size_t>(c)]) +
                              " labeled windows; min_segments is unsatisfiable");
    return m;
}

CorpusManifest split_corpus(const CorpusManifest& m, double train_ratio, double dev_ratio,
                            double eval_ratio, std::uint64_t seed) {
    const double ratios[3] = {train_ratio, dev_ratio, eval_ratio};
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r > 0.0)) throw ConfigError("split ratios must all be positive");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");

    const std::size_t n = m.recordings.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng = Rng::fork(seed, {2});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);

    std::size_t counts[3];
    counts[0] = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(n)));
    counts[1] = static_cast<std::size_t>(std::floor(dev_ratio * static_cast<double>(n)));
    counts[2] = n - counts[0] - counts[1];
    for (int s = 0; s < 3; ++s)
        if (counts[s] == 0)
            throw ConfigError(std::string("split '") + split_name(static_cast<Split>(s)) +
                              "' would receive zero recordings");

    CorpusManifest out = m;
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
        for (std::size_t i = 0; i < counts[s]; ++i, ++pos)
            out.recordings[order[pos]].split = static_cast<Split>(s);
    return out;
}

void validate_min_segments(const CorpusManifest& m, const CorpusConfig& cfg,
                           double window_len_s) {
    std::vector<std::array<int, 3>> counts(static_cast<std::size_t>(cfg.n_classes),
                                           {0, 0, 0});
    for (const auto& rec : m.recordings) {
        const int n_windows = static_cast<int>(rec.duration_s / window_len_s);
        for (int k = 0; k < n_windows; ++k)
            for (int c : labels_for_window(rec.events, k * window_len_s, window_len_s,
                                           cfg.label_overlap))
                counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(rec.split)] += 1;
    }
    for (int c = 0; c < cfg.n_classes; ++c)
        for (int s = 0; s < 3; ++s)
            if (counts[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)] <
                cfg.min_segments)
                throw ConfigError("class " + std::to_string(c) + " has only " +
                                  std::to_string(counts[static_cast<std::size_t>(c)]
                                                       [static_cast<std::size_t>(s)]) +
                                  " labeled windows in split '" +
                                  split_name(static_cast<Split>(s)) + "'");
}

std::vector<int> labels_for_window(const std::vector<Event>& events, double win_start_s,
                                   double win_len_s, double overlap_frac) {
    std::set<int> labels;
    for (const auto& ev : events) {
        const double ov = overlap_seconds(win_start_s, win_start_s + win_len_s, ev.onset_s,
                                          ev.onset_s + ev.duration_s);
        if (ov >= overlap_frac * win_len_s) labels.insert(ev.class_id);
    }
    return {labels.begin(), labels.end()};
}

namespace {

void render_event(std::vector<double>& mix, const EventClass& cls, const Event& ev,
                  int sample_rate, Rng& rng) {
    const auto n = static_cast<std::size_t>(ev.duration_s * sample_rate);
    if (n == 0) return;
    const auto start = static_cast<std::size_t>(ev.onset_s * sample_rate);
    const double dt = 1.0 / sample_rate;

    // Per-event jitter keeps classes categories, not templates. The pitch
    // spread is wide enough that absolute frequency alone is an unreliable
    // class cue, while same-family classes stay well separated.
    const double freq_jitter = std::pow(2.0, rng.uniform_range(-0.4, 0.4));
    const double rate_jitter = rng.uniform_range(0.85, 1.15);
    const double phase0 = rng.uniform_range(0.0, 2.0 * kPi);

    std::vector<double> sig(n, 0.0);
    switch (cls.family) {
    case EventFamily::Tone: {
        const double f = cls.fundamental_hz * freq_jitter;
        for (std::size_t i = 0; i < n; ++i) sig[i] = std::sin(phase0 + 2.0 * kPi * f * i * dt);
        break;
    }
    case EventFamily::ChirpUp:
    case EventFamily::ChirpDown: {
        const double f0 = cls.fundamental_hz * freq_jitter;
        const double oct = cls.sweep_octaves * (cls.family == EventFamily::ChirpUp ? 1.0 : -1.0);
        double phase = phase0;
        for (std::size_t i = 0; i < n; ++i) {
            const double frac = static_cast<double>(i) / static_cast<double>(n);
            const double f = f0 * std::pow(2.0, oct * frac);
            phase += 2.0 * kPi * f * dt;
            sig[i] = std::sin(phase);
        }
        break;
    }
    case EventFamily::HarmonicStack: {
        const double f0 = cls.fundamental_hz * freq_jitter;
        for (int h = 1; h <= 5; ++h) {
            const double ph = rng.uniform_range(0.0, 2.0 * kPi);
            const double amp = 1.0 / h;
            for (std::size_t i = 0; i < n; ++i)
                sig[i] += amp * std::sin(ph + 2.0 * kPi * h * f0 * i * dt);
        }
        for (auto& v : sig) v /= 2.28; // sum of 1/h for h=1..5
        break;
    }
    case EventFamily::AmNoiseBurst: {
        const double rate = cls.mod_rate_hz * rate_jitter;
        for (std::size_t i = 0; i < n; ++i) {
            const double env = 0.5 * (1.0 + std::sin(phase0 + 2.0 * kPi * rate * i * dt));
            sig[i] = env * rng.gaussian() * 0.5;
        }
        break;
    }
    case EventFamily::ClickTrain: {
        const double rate = cls.mod_rate_hz * rate_jitter;
        const double ring_hz = cls.fundamental_hz * freq_jitter;
        const double period = 1.0 / rate;
        const auto click_len = static_cast<std::size_t>(0.01 * sample_rate);
        for (double t0 = rng.uniform_range(0.0, period); t0 < ev.duration_s; t0 += period) {
            const auto c0 = static_cast<std::size_t>(t0 * sample_rate);
            for (std::size_t i = 0; i < click_len && c0 + i < n; ++i) {
                const double t = i * dt;
                sig[c0 + i] += std::exp(-t / 0.002) * std::sin(2.0 * kPi * ring_hz * t);
            }
        }
        break;
    }
    }

    // Raised-cosine onset/offset ramps.
    const auto ramp = static_cast<std::size_t>(
        std::min(kRampSeconds, ev.duration_s / 4.0) * sample_rate);
    for (std::size_t i = 0; i < ramp && i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(kPi * static_cast<double>(i) /
                                              static_cast<double>(ramp));
        sig[i] *= w;
        sig[n - 1 - i] *= w;
    }

    for (std::size_t i = 0; i < n && start + i < mix.size(); ++i)
        mix[start + i] += ev.gain * sig[i];
}

} // namespace

Waveform render_recording(const CorpusManifest& m, const RecordingScript& script,
                          std::uint64_t seed) {
    const int sr = 16000;
    const auto n = static_cast<std::size_t>(script.duration_s * sr);
    std::vector<double> mix(n, 0.0);

    for (std::size_t e = 0; e < script.events.size(); ++e) {
        const Event& ev = script.events[e];
        if (ev.class_id < 0 || ev.class_id >= m.n_classes())
            throw ConfigError("event references unknown class " + std::to_string(ev.class_id));
        Rng rng = Rng::fork(seed, {4, script.recording_id, e});
        render_event(mix, m.classes[static_cast<std::size_t>(ev.class_id)], ev, sr, rng);
    }

    double sig_power = 0.0;
    for (double v : mix) sig_power += v * v;
    sig_power /= static_cast<double>(n);

    const double snr_lin = std::pow(10.0, script.background_snr_db / 10.0);
    const double noise_sigma =
        sig_power > 0.0 ? std::sqrt(sig_power / snr_lin) : 1e-3;
    Rng noise_rng = Rng::fork(seed, {3, script.recording_id});
    for (auto& v : mix) v += noise_sigma * noise_rng.gaussian();

    double peak = 0.0;
    for (double v : mix) peak = std::max(peak, std::abs(v));
    const double scale = peak > 0.9 ? 0.9 / peak : 1.0;

    Waveform w;
    w.sample_rate = sr;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) w.samples[i] = static_cast<float>(mix[i] * scale);
    return w;
}

void write_manifest(const std::string& path, const CorpusManifest& m) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    for (const auto& rec : m.recordings) {
        nlohmann::json j;
        j["id"] = rec.recording_id;
        j["path"] = rec.path;
        j["duration_s"] = rec.duration_s;
        j["snr_db"] = rec.background_snr_db;
        j["class_pool"] = rec.class_pool;
        j["split"] = split_name(rec.split);
        nlohmann::json events = nlohmann::json::array();
        for (const auto& ev : rec.events) {
            events.push_back({{"class_id", ev.class_id},
                              {"onset_s", ev.onset_s},
                              {"duration_s", ev.duration_s},
                              {"gain", ev.gain}});
        }
        j["events"] = std::move(events);
        f << j.dump() << '\n';
    }
    if (!f) throw IoError("short write: " + path);
}

CorpusManifest read_manifest(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    CorpusManifest m;
    int max_class = -1;
    std::string line;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed manifest line in " + path + ": " + e.what());
        }
        RecordingScript rec;
        rec.recording_id = j.at("id").get<std::uint32_t>();
        rec.path = j.at("path").get<std::string>();
        rec.duration_s = j.at("duration_s").get<double>();
        rec.background_snr_db = j.value("snr_db", 20.0);
        if (j.contains("class_pool")) rec.class_pool = j["class_pool"].get<std::vector<int>>();
        rec.split = split_from_name(j.at("split").get<std::string>());
        for (const auto& je : j.at("events")) {
            Event ev;
            ev.class_id = je.at("class_id").get<int>();
            ev.onset_s = je.at("onset_s").get<double>();
            ev.duration_s = je.at("duration_s").get<double>();
            ev.gain = je.at("gain").get<double>();
            max_class = std::max(max_class, ev.class_id);
            rec.events.push_back(ev);
        }
        m.recordings.push_back(std::move(rec));
    }
    m.classes = default_classes(max_class + 1);
    return m;
}

} // namespace tripletforge
