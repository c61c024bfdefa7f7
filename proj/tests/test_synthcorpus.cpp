#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>

#include "tripletforge/errors.hpp"
#include "tripletforge/synthcorpus.hpp"

using namespace tripletforge;

namespace {

bool same_manifest(const CorpusManifest& a, const CorpusManifest& b) {
    if (a.recordings.size() != b.recordings.size()) return false;
    for (std::size_t i = 0; i < a.recordings.size(); ++i) {
        const auto& x = a.recordings[i];
        const auto& y = b.recordings[i];
        if (x.recording_id != y.recording_id || x.path != y.path ||
            x.duration_s != y.duration_s || x.background_snr_db != y.background_snr_db ||
            x.class_pool != y.class_pool || x.split != y.split ||
            x.events.size() != y.events.size())
            return false;
        for (std::size_t e = 0; e < x.events.size(); ++e) {
            if (x.events[e].class_id != y.events[e].class_id ||
                x.events[e].onset_s != y.events[e].onset_s ||
                x.events[e].duration_s != y.events[e].duration_s ||
                x.events[e].gain != y.events[e].gain)
                return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("default classes cycle families with distinct parameters") {
    const auto classes = default_classes(8);
    REQUIRE(classes.size() == 8);
    for (int i = 0; i < 8; ++i) {
        CHECK(classes[static_cast<std::size_t>(i)].class_id == i);
        CHECK(classes[static_cast<std::size_t>(i)].family ==
              static_cast<EventFamily>(i % 6));
    }
    // Same family, later cycle: fundamentals diverge.
    CHECK(classes[0].family == classes[6].family);
    CHECK(classes[6].fundamental_hz == doctest::Approx(classes[0].fundamental_hz * 3.2));
    CHECK(classes[1].fundamental_hz != classes[7].fundamental_hz);
}

TEST_CASE("corpus generation is deterministic and respects its config") {
    CorpusConfig cfg;
    const auto m1 = generate_corpus(cfg, 7);
    const auto m2 = generate_corpus(cfg, 7);
    CHECK(same_manifest(m1, m2));
    const auto m3 = generate_corpus(cfg, 8);
    CHECK_FALSE(same_manifest(m1, m3));

    CHECK(m1.n_classes() == 8);
    REQUIRE(m1.recordings.size() == 200);
    std::set<std::string> paths;
    for (const auto& rec : m1.recordings) {
        paths.insert(rec.path);
        CHECK(rec.duration_s == 10.0);
        CHECK(rec.background_snr_db >= 15.0);
        CHECK(rec.background_snr_db <= 30.0);
        CHECK(rec.class_pool.size() >= 2);
        CHECK(rec.class_pool.size() <= 3);
        CHECK(rec.events.size() >= 6);
        CHECK(rec.events.size() <= 10);
        for (const auto& ev : rec.events) {
            CHECK(std::find(rec.class_pool.begin(), rec.class_pool.end(), ev.class_id) !=
                  rec.class_pool.end());
            CHECK(ev.duration_s >= 0.8);
            CHECK(ev.duration_s <= 2.5);
            CHECK(ev.gain >= 0.3);
            CHECK(ev.gain <= 1.0);
            CHECK(ev.onset_s >= 0.0);
            CHECK(ev.onset_s + ev.duration_s <= rec.duration_s + 1e-9);
        }
    }
    CHECK(paths.size() == 200);
}

TEST_CASE("corpus generation rejects an infeasible config") {
    CorpusConfig cfg;
    cfg.n_recordings = 10;
    cfg.min_events = 1;
    cfg.max_events = 1;
    cfg.n_classes = 64; // far more classes than events to cover them
    cfg.pool_max = 3;
    bool threw = false;
    try {
        generate_corpus(cfg, 1);
    } catch (const ConfigError& e) {
        threw = true;
        CHECK(std::string(e.what()).find("min_segments is unsatisfiable") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("splitting partitions recordings by the requested ratios") {
    CorpusConfig cfg;
    const auto m = generate_corpus(cfg, 7);
    const auto s = split_corpus(m, 0.8, 0.1, 0.1, 13);

    std::size_t counts[3] = {0, 0, 0};
    for (const auto& rec : s.recordings) counts[static_cast<std::size_t>(rec.split)] += 1;
    CHECK(counts[0] == 160);
    CHECK(counts[1] == 20);
    CHECK(counts[2] == 20);

    // Deterministic in the seed, recordings keep their identity.
    const auto s2 = split_corpus(m, 0.8, 0.1, 0.1, 13);
    CHECK(same_manifest(s, s2));
    for (std::size_t i = 0; i < s.recordings.size(); ++i)
        CHECK(s.recordings[i].recording_id == m.recordings[i].recording_id);

    CHECK_THROWS_AS(split_corpus(m, 1.0, 0.0, 0.0, 13), ConfigError);
    CHECK_THROWS_AS(split_corpus(m, 0.5, 0.2, 0.2, 13), ConfigError);
}

TEST_CASE("window labels require the configured overlap") {
    std::vector<Event> events;
    events.push_back({3, 1.0, 1.0, 0.5});  // covers [1.0, 2.0]
    events.push_back({5, 1.9, 0.2, 0.5});  // covers [1.9, 2.1]

    // Window [0.96, 1.92): class 3 overlaps 0.92 s of 0.96 -> labeled;
    // class 5 overlaps 0.02 s -> not labeled.
    auto labels = labels_for_window(events, 0.96, 0.96, 0.5);
    CHECK(labels == std::vector<int>{3});

    // Window [0, 0.96): class 3 overlaps exactly 0 -> empty label set.
    CHECK(labels_for_window(events, 0.0, 0.96, 0.5).empty());

    // Lowering the threshold admits the short event in its window.
    labels = labels_for_window(events, 1.92, 0.96, 0.1);
    CHECK(labels == std::vector<int>{5});

    // Duplicate classes collapse to one label.
    events.push_back({3, 1.2, 0.9, 0.5});
    labels = labels_for_window(events, 0.96, 0.96, 0.5);
    CHECK(labels == std::vector<int>{3});
}

TEST_CASE("rendering is deterministic, bounded, and audible") {
    CorpusConfig cfg;
    cfg.n_recordings = 12;
    cfg.min_segments = 0;
    const auto m = generate_corpus(cfg, 3);
    const auto& rec = m.recordings[0];

    const Waveform a = render_recording(m, rec, 3);
    const Waveform b = render_recording(m, rec, 3);
    CHECK(a.samples == b.samples);
    CHECK(a.sample_rate == 16000);
    CHECK(a.samples.size() == 160000);

    const Waveform c = render_recording(m, rec, 4);
    CHECK(a.samples != c.samples);

    double peak = 0.0, power = 0.0;
    for (float v : a.samples) {
        peak = std::max(peak, static_cast<double>(std::abs(v)));
        power += static_cast<double>(v) * v;
    }
    CHECK(peak <= 0.9 + 1e-6);
    CHECK(power / static_cast<double>(a.samples.size()) > 1e-6);
}

TEST_CASE("distinct recordings render distinct audio") {
    CorpusConfig cfg;
    cfg.n_recordings = 12;
    cfg.min_segments = 0;
    const auto m = generate_corpus(cfg, 5);
    const Waveform a = render_recording(m, m.recordings[0], 5);
    const Waveform b = render_recording(m, m.recordings[1], 5);
    CHECK(a.samples != b.samples);
}

TEST_CASE("manifest round trip through JSONL") {
    CorpusConfig cfg;
    cfg.n_recordings = 20;
    auto m = generate_corpus(cfg, 9);
    m = split_corpus(m, 0.5, 0.25, 0.25, 9);

    const auto dir = std::filesystem::temp_directory_path() / "tf_corpus_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "manifest.jsonl").string();

    write_manifest(path, m);
    const auto r = read_manifest(path);
    CHECK(same_manifest(m, r));
    CHECK(r.n_classes() == m.n_classes());

    // Malformed line -> IoError.
    {
        std::ofstream f(path, std::ios::app);
        f << "{not json\n";
    }
    CHECK_THROWS_AS(read_manifest(path), IoError);
    CHECK_THROWS_AS(read_manifest((dir / "missing.jsonl").string()), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("per-split minimum segment validation names the deficient class") {
    CorpusConfig cfg;
    auto m = generate_corpus(cfg, 7);
    m = split_corpus(m, 0.8, 0.1, 0.1, 13);
    CHECK_NOTHROW(validate_min_segments(m, cfg, 0.96));

    CorpusConfig strict = cfg;
    strict.min_segments = 100000;
    bool threw = false;
    try {
        validate_min_segments(m, strict, 0.96);
    } catch (const ConfigError& e) {
        threw = true;
        CHECK(std::string(e.what()).find("class 0") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("temporal proximity carries class signal within recordings") {
    CorpusConfig cfg;
    const auto m = generate_corpus(cfg, 7);
    const double win = 0.96;

    // Probability that two windows share a class, within vs across
    // recordings. The class-pool structure must make "within" much likelier.
    std::vector<std::vector<std::vector<int>>> window_labels;
    for (const auto& rec : m.recordings) {
        std::vector<std::vector<int>> labels;
        const int n_windows = static_cast<int>(rec.duration_s / win);
        for (int k = 0; k < n_windows; ++k)
            labels.push_back(labels_for_window(rec.events, k * win, win, cfg.label_overlap));
        window_labels.push_back(std::move(labels));
    }

    auto share = [](const std::vector<int>& a, const std::vector<int>& b) {
        for (int c : a)
            if (std::find(b.begin(), b.end(), c) != b.end()) return true;
        return false;
    };

    std::size_t within_hits = 0, within_total = 0;
    for (const auto& rec : window_labels) {
        for (std::size_t i = 0; i < rec.size(); ++i) {
            for (std::size_t j = i + 1; j < rec.size(); ++j) {
                if (rec[i].empty() || rec[j].empty()) continue;
                ++within_total;
                within_hits += share(rec[i], rec[j]) ? 1 : 0;
            }
        }
    }

    std::size_t cross_hits = 0, cross_total = 0;
    for (std::size_t r1 = 0; r1 < window_labels.size(); ++r1) {
        const std::size_t r2 = (r1 + 97) % window_labels.size();
        for (const auto& a : window_labels[r1]) {
            for (const auto& b : window_labels[r2]) {
                if (a.empty() || b.empty()) continue;
                ++cross_total;
                cross_hits += share(a, b) ? 1 : 0;
            }
        }
    }

    REQUIRE(within_total > 100);
    REQUIRE(cross_total > 100);
    const double p_within = static_cast<double>(within_hits) / within_total;
    const double p_cross = static_cast<double>(cross_hits) / cross_total;
    CHECK(p_within >= 2.0 * p_cross);
}
