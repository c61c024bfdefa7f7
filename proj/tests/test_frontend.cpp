#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "tripletforge/errors.hpp"
#include "tripletforge/frontend.hpp"
#include "tripletforge/rng.hpp"

using namespace tripletforge;

namespace {

Waveform make_tone(double freq_hz, double seconds, int sr = 16000, float amp = 0.5f) {
    Waveform w;
    w.sample_rate = sr;
    const auto n = static_cast<std::size_t>(seconds * sr);
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i)
        w.samples[i] = amp * static_cast<float>(std::sin(2.0 * M_PI * freq_hz * i / sr));
    return w;
}

ContextWindow random_window(Rng& rng, int F = 8, int T = 6) {
    ContextWindow w;
    w.n_mels = F;
    w.n_frames = T;
    w.cells.resize(static_cast<std::size_t>(F) * T);
    for (auto& c : w.cells) c = static_cast<float>(rng.uniform_range(0.0, 5.0));
    return w;
}

} // namespace

TEST_CASE("mel spectrogram of silence is all zeros") {
    Waveform w;
    w.samples.assign(16000, 0.0f);
    const auto s = mel_spectrogram(w, FeatureConfig{});
    CHECK(s.n_mels == 64);
    for (float c : s.cells) CHECK(c == 0.0f);
}

TEST_CASE("frame count follows floor((len - window)/hop) + 1") {
    FeatureConfig cfg;
    Waveform w;
    w.samples.assign(16000, 0.01f);
    const auto s = mel_spectrogram(w, cfg);
    CHECK(s.n_frames == (16000 - 400) / 160 + 1);
    CHECK(s.frame_hop_s == doctest::Approx(0.010));
}

TEST_CASE("energy is quadratic in amplitude") {
    const Waveform w1 = make_tone(800.0, 0.5, 16000, 0.25f);
    Waveform w2 = w1;
    for (auto& s : w2.samples) s *= 2.0f;
    const auto s1 = mel_spectrogram(w1, FeatureConfig{});
    const auto s2 = mel_spectrogram(w2, FeatureConfig{});
    for (std::size_t i = 0; i < s1.cells.size(); ++i) {
        if (s1.cells[i] < 1e-6f) continue;
        CHECK(s2.cells[i] / s1.cells[i] == doctest::Approx(4.0).epsilon(1e-5));
    }
}

TEST_CASE("1 kHz tone lands in the analytically nearest mel channel") {
    FeatureConfig cfg;
    // Channel centers from the implemented mel mapping.
    const double mel_lo = hz_to_mel(cfg.mel_lo_hz);
    const double mel_hi = hz_to_mel(cfg.mel_hi_hz);
    int expected = 0;
    double best = 1e18;
    for (int m = 0; m < cfg.n_mels; ++m) {
        const double center = mel_to_hz(mel_lo + (mel_hi - mel_lo) * (m + 1) / (cfg.n_mels + 1));
        const double dist = std::abs(center - 1000.0);
        if (dist < best) {
            best = dist;
            expected = m;
        }
    }

    const auto s = mel_spectrogram(make_tone(1000.0, 1.0), cfg);
    for (int t = 0; t < s.n_frames; ++t) {
        int argmax = 0;
        for (int f = 1; f < s.n_mels; ++f)
            if (s.at(f, t) > s.at(argmax, t)) argmax = f;
        CHECK(argmax == expected);
    }
}

TEST_CASE("mel spectrogram rejects bad inputs") {
    FeatureConfig cfg;
    Waveform shorty;
    shorty.samples.assign(100, 0.1f);
    CHECK_THROWS_AS(mel_spectrogram(shorty, cfg), ConfigError);

    Waveform bad;
    bad.samples.assign(16000, 0.1f);
    bad.samples[7] = std::nanf("");
    CHECK_THROWS_AS(mel_spectrogram(bad, cfg), NumericError);
}

TEST_CASE("energy nonnegativity on random waveforms") {
    Rng rng(11);
    for (int trial = 0; trial < 5; ++trial) {
        Waveform w;
        w.samples.resize(8000);
        for (auto& s : w.samples) s = static_cast<float>(rng.uniform_range(-1.0, 1.0));
        const auto s = mel_spectrogram(w, FeatureConfig{});
        for (float c : s.cells) CHECK(c >= 0.0f);
    }
}

TEST_CASE("stabilized log values and monotonicity") {
    EnergySpectrogram s;
    s.n_mels = 1;
    s.n_frames = 3;
    s.frame_hop_s = 0.01;
    s.cells = {0.0f, static_cast<float>(std::exp(1.0) - 0.01), 2.5f};
    const auto l = stabilized_log(s, 0.01);
    CHECK(l.cells[0] == doctest::Approx(std::log(0.01)));
    CHECK(l.cells[1] == doctest::Approx(1.0));
    CHECK(l.domain == Domain::Log);

    // monotone: larger energy, larger log cell
    CHECK(l.cells[2] > l.cells[0]);
    CHECK_THROWS_AS(stabilized_log(s, 0.0), ConfigError);
    CHECK_THROWS_AS(stabilized_log(s, -1.0), ConfigError);
}

TEST_CASE("windowing partitions the spectrogram") {
    EnergySpectrogram s;
    s.n_mels = 4;
    s.n_frames = 960;
    s.frame_hop_s = 0.01;
    s.cells.resize(static_cast<std::size_t>(4) * 960);
    Rng rng(3);
    for (auto& c : s.cells) c = static_cast<float>(rng.uniform());

    const auto windows = window_spectrogram(s, 96, 42);
    REQUIRE(windows.size() == 10);
    for (std::size_t k = 0; k < windows.size(); ++k) {
        CHECK(windows[k].start_time_s == doctest::Approx(0.96 * k));
        CHECK(windows[k].recording_id == 42);
        for (int f = 0; f < 4; ++f)
            for (int t = 0; t < 96; ++t)
                CHECK(windows[k].at(f, t) == s.at(f, static_cast<int>(k) * 96 + t));
    }

    s.n_frames = 95;
    s.cells.resize(static_cast<std::size_t>(4) * 95);
    CHECK(window_spectrogram(s, 96).empty());
}

TEST_CASE("total energy sums cells and is linear") {
    ContextWindow ones;
    ones.n_mels = 64;
    ones.n_frames = 96;
    ones.cells.assign(64 * 96, 1.0f);
    CHECK(total_energy(ones) == doctest::Approx(6144.0));

    ContextWindow zeros = ones;
    std::fill(zeros.cells.begin(), zeros.cells.end(), 0.0f);
    CHECK(total_energy(zeros) == 0.0);

    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        ContextWindow x = random_window(rng);
        ContextWindow y = random_window(rng);
        ContextWindow sum = x;
        for (std::size_t i = 0; i < sum.cells.size(); ++i) sum.cells[i] += y.cells[i];
        CHECK(total_energy(sum) ==
              doctest::Approx(total_energy(x) + total_energy(y)).epsilon(1e-5));
    }

    ContextWindow log_win = ones;
    log_win.domain = Domain::Log;
    CHECK_THROWS_AS(total_energy(log_win), ConfigError);
}

TEST_CASE("wav round trip and linear resampling") {
    const auto dir = std::filesystem::temp_directory_path() / "tf_frontend_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "tone.wav").string();

    const Waveform w = make_tone(500.0, 0.25);
    write_wav(path, w);
    const Waveform r = read_wav(path);
    REQUIRE(r.samples.size() == w.samples.size());
    CHECK(r.sample_rate == 16000);
    for (std::size_t i = 0; i < r.samples.size(); i += 97)
        CHECK(r.samples[i] == doctest::Approx(w.samples[i]).epsilon(1e-3));

    const Waveform up = resample_linear(r, 32000);
    CHECK(up.sample_rate == 32000);
    CHECK(up.samples.size() >= 2 * r.samples.size() - 2);
    std::filesystem::remove_all(dir);
}
