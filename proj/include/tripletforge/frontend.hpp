#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tripletforge {

struct Waveform {
    std::vector<float> samples;
    int sample_rate = 16000;
};

// 16-bit PCM mono RIFF WAV.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& w);

// Linear-interpolation resampler used on ingest when the file rate differs
// from the pipeline rate.
Waveform resample_linear(const Waveform& w, int target_rate);

struct FeatureConfig {
    double window_ms = 25.0;
    double hop_ms = 10.0;
    int n_mels = 64;
    double mel_lo_hz = 125.0;
    double mel_hi_hz = 7500.0;
    double log_offset = 0.01;
    int sample_rate = 16000;

    int window_samples() const;
    int hop_samples() const;
    int fft_size() const; // next power of two >= window length
    void validate() const;
};

enum class Domain : std::uint8_t { Energy = 0, Log = 1 };

// F x n_frames nonnegative mel energies, channel-major (row f, column t).
struct EnergySpectrogram {
    int n_mels = 0;
    int n_frames = 0;
    double frame_hop_s = 0.0;
    Domain domain = Domain::Energy;
    std::vector<float> cells; // n_mels * n_frames

    float& at(int f, int t) { return cells[static_cast<std::size_t>(f) * n_frames + t]; }
    float at(int f, int t) const { return cells[static_cast<std::size_t>(f) * n_frames + t]; }
};

// One training/eval example: an F x T slice of spectrogram.
struct ContextWindow {
    int n_mels = 0;
    int n_frames = 0; // T
    double start_time_s = 0.0;
    std::uint32_t recording_id = 0;
    Domain domain = Domain::Energy;
    std::vector<float> cells; // n_mels * n_frames, channel-major

    float& at(int f, int t) { return cells[static_cast<std::size_t>(f) * n_frames + t]; }
    float at(int f, int t) const { return cells[static_cast<std::size_t>(f) * n_frames + t]; }
};

constexpr int kDefaultMels = 64;   // F
constexpr int kDefaultFrames = 96; // T

// Mel scale used throughout: mel(f) = 2595 * log10(1 + f / 700).
double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular, peak-normalized filterbank over FFT bin center frequencies.
// Returns n_mels rows of fft_size/2+1 weights.
std::vector<std::vector<float>> mel_filterbank(const FeatureConfig& cfg);

// Squared-magnitude STFT (periodic Hann) aggregated by the mel filterbank.
EnergySpectrogram mel_spectrogram(const Waveform& w, const FeatureConfig& cfg);

// Cellwise ln(cell + offset).
EnergySpectrogram stabilized_log(const EnergySpectrogram& s, double offset);
ContextWindow stabilized_log(const ContextWindow& x, double offset);

// Consecutive non-overlapping blocks of T frames; trailing partial dropped.
std::vector<ContextWindow> window_spectrogram(const EnergySpectrogram& s, int T,
                                              std::uint32_t recording_id = 0);

// Sum of all cells of an energy-domain window.
double total_energy(const ContextWindow& x);

} // namespace tripletforge
