#include "tripletforge/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

#include "tripletforge/errors.hpp"
#include "tripletforge/threads.hpp"

namespace tripletforge {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Iterative radix-2 Cooley-Tukey, in place. n must be a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * kPi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

} // namespace

int FeatureConfig::window_samples() const {
    return static_cast<int>(std::lround(window_ms * sample_rate / 1000.0));
}

int FeatureConfig::hop_samples() const {
    return static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
}

int FeatureConfig::fft_size() const {
    int n = 1;
    while (n < window_samples()) n <<= 1;
    return n;
}

void FeatureConfig::validate() const {
    if (!(window_ms > hop_ms && hop_ms > 0))
        throw ConfigError("feature config requires window_ms > hop_ms > 0");
    if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
    if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
    if (mel_hi_hz > sample_rate / 2.0)
        throw ConfigError("mel_hi_hz exceeds Nyquist frequency");
    if (!(mel_lo_hz >= 0.0 && mel_lo_hz < mel_hi_hz))
        throw ConfigError("mel filterbank range is invalid");
    if (!(log_offset > 0.0)) throw ConfigError("log_offset must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<std::vector<float>> mel_filterbank(const FeatureConfig& cfg) {
    cfg.validate();
    const int n_bins = cfg.fft_size() / 2 + 1;
    const double bin_hz = static_cast<double>(cfg.sample_rate) / cfg.fft_size();

    const double mel_lo = hz_to_mel(cfg.mel_lo_hz);
    const double mel_hi = hz_to_mel(cfg.mel_hi_hz);
    std::vector<double> edges(static_cast<std::size_t>(cfg.n_mels) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                          (cfg.n_mels + 1));

    std::vector<std::vector<float>> bank(static_cast<std::size_t>(cfg.n_mels));
    for (int m = 0; m < cfg.n_mels; ++m) {
        auto& filt = bank[static_cast<std::size_t>(m)];
        filt.assign(static_cast<std::size_t>(n_bins), 0.0f);
        const double left = edges[static_cast<std::size_t>(m)];
        const double center = edges[static_cast<std::size_t>(m) + 1];
        const double right = edges[static_cast<std::size_t>(m) + 2];
        for (int b = 0; b < n_bins; ++b) {
            const double f = b * bin_hz;
            double w = 0.0;
            if (f > left && f < center)
                w = (f - left) / (center - left);
            else if (f >= center && f < right)
                w = (right - f) / (right - center);
            filt[static_cast<std::size_t>(b)] = static_cast<float>(w);
        }
    }
    return bank;
}

EnergySpectrogram mel_spectrogram(const Waveform& input, const FeatureConfig& cfg) {
    cfg.validate();
    for (float s : input.samples)
        if (!std::isfinite(s)) throw NumericError("waveform contains non-finite samples");

    const Waveform w =
        input.sample_rate == cfg.sample_rate ? input : resample_linear(input, cfg.sample_rate);

    const int win = cfg.window_samples();
    const int hop = cfg.hop_samples();
    const int nfft = cfg.fft_size();
    if (static_cast<int>(w.samples.size()) < win)
        throw ConfigError("insufficient audio: waveform shorter than one analysis window");

    const int n_frames = static_cast<int>((w.samples.size() - static_cast<std::size_t>(win)) /
                                          static_cast<std::size_t>(hop)) + 1;
    const auto bank = mel_filterbank(cfg);
    const int n_bins = nfft / 2 + 1;

    std::vector<double> hann(static_cast<std::size_t>(win));
    for (int i = 0; i < win; ++i)
        hann[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * kPi * i / win);

    EnergySpectrogram out;
    out.n_mels = cfg.n_mels;
    out.n_frames = n_frames;
    out.frame_hop_s = hop / static_cast<double>(cfg.sample_rate);
    out.cells.assign(static_cast<std::size_t>(cfg.n_mels) * n_frames, 0.0f);

    parallel_for(static_cast<std::size_t>(n_frames), [&](std::size_t t) {
        std::vector<std::complex<double>> frame(static_cast<std::size_t>(nfft), {0.0, 0.0});
        const std::size_t base = t * static_cast<std::size_t>(hop);
        for (int i = 0; i < win; ++i)
            frame[static_cast<std::size_t>(i)] =
                static_cast<double>(w.samples[base + static_cast<std::size_t>(i)]) *
                hann[static_cast<std::size_t>(i)];
        fft_inplace(frame);

        std::vector<double> power(static_cast<std::size_t>(n_bins));
        for (int b = 0; b < n_bins; ++b)
            power[static_cast<std::size_t>(b)] = std::norm(frame[static_cast<std::size_t>(b)]);

        for (int m = 0; m < cfg.n_mels; ++m) {
            const auto& filt = bank[static_cast<std::size_t>(m)];
            double acc = 0.0;
            for (int b = 0; b < n_bins; ++b)
                acc += filt[static_cast<std::size_t>(b)] * power[static_cast<std::size_t>(b)];
            out.cells[static_cast<std::size_t>(m) * n_frames + t] = static_cast<float>(acc);
        }
    });
    return out;
}

EnergySpectrogram stabilized_log(const EnergySpectrogram& s, double offset) {
    if (!(offset > 0.0)) throw ConfigError("log offset must be positive");
    EnergySpectrogram out = s;
    out.domain = Domain::Log;
    for (auto& c : out.cells) c = static_cast<float>(std::log(static_cast<double>(c) + offset));
    return out;
}

ContextWindow stabilized_log(const ContextWindow& x, double offset) {
    if (!(offset > 0.0)) throw ConfigError("log offset must be positive");
    ContextWindow out = x;
    out.domain = Domain::Log;
    for (auto& c : out.cells) c = static_cast<float>(std::log(static_cast<double>(c) + offset));
    return out;
}

std::vector<ContextWindow> window_spectrogram(const EnergySpectrogram& s, int T,
                                              std::uint32_t recording_id) {
    if (T < 1) throw ConfigError("window length T must be >= 1");
    const int count = s.n_frames / T;
    std::vector<ContextWindow> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
        ContextWindow win;
        win.n_mels = s.n_mels;
        win.n_frames = T;
        win.start_time_s = static_cast<double>(k) * T * s.frame_hop_s;
        win.recording_id = recording_id;
        win.domain = s.domain;
        win.cells.resize(static_cast<std::size_t>(s.n_mels) * T);
        for (int f = 0; f < s.n_mels; ++f)
            for (int t = 0; t < T; ++t) win.at(f, t) = s.at(f, k * T + t);
        out.push_back(std::move(win));
    }
    return out;
}

double total_energy(const ContextWindow& x) {
    if (x.domain != Domain::Energy)
        throw ConfigError("total_energy requires an energy-domain window");
    double acc = 0.0;
    for (float c : x.cells) acc += static_cast<double>(c);
    return acc;
}

} // namespace tripletforge
