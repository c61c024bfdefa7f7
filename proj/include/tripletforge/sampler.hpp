#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tripletforge/frontend.hpp"
#include "tripletforge/rng.hpp"

namespace tripletforge {

enum class TripletSource : std::uint8_t {
    Labeled = 0,
    Noise = 1,
    Translation = 2,
    Mixing = 3,
    Proximity = 4,
};

const char* triplet_source_name(TripletSource s);

struct Example {
    ContextWindow window; // energy domain
    std::vector<int> labels;
    bool labeled = false;
    std::uint32_t recording = 0;
    std::uint32_t window_index = 0;
    double start_time_s = 0.0;

    bool has_label(int c) const;
};

struct WindowRef {
    std::uint32_t recording = 0;
    std::uint32_t window = 0;
};

// Triplets persist as references plus the transform seed and parameters;
// the positive is re-materialized deterministically on load.
struct TripletRecord {
    TripletSource source = TripletSource::Labeled;
    std::uint64_t transform_seed = 0;
    WindowRef anchor;
    WindowRef positive;
    WindowRef negative;
    std::array<float, 4> params{0.0f, 0.0f, 0.0f, 0.0f};
};

struct SamplerConfig {
    double sigma = 0.5;      // Gaussian noise width
    int freq_shift_S = 10;   // max frequency shift in bins
    double alpha = 0.25;     // mixing weight
    double delta_t_s = 10.0; // proximity window
    // Per-source weights for joint sampling, indexed by TripletSource.
    std::array<double, 5> weights{0.0, 1.0, 1.0, 1.0, 1.0};

    void validate(int n_mels) const;
};

class Dataset {
public:
    explicit Dataset(std::vector<Example> examples);

    const std::vector<Example>& examples() const { return examples_; }
    std::size_t size() const { return examples_.size(); }
    const Example& at(std::size_t i) const { return examples_[i]; }

    std::size_t index_of(WindowRef ref) const;
    static WindowRef ref_of(const Example& e) { return {e.recording, e.window_index}; }

    // Dataset indices grouped per recording, in insertion order.
    const std::unordered_map<std::uint32_t, std::vector<std::size_t>>& by_recording() const {
        return by_recording_;
    }
    const std::vector<std::uint32_t>& recording_ids() const { return recording_ids_; }

private:
    std::vector<Example> examples_;
    std::unordered_map<std::uint64_t, std::size_t> ref_index_;
    std::unordered_map<std::uint32_t, std::vector<std::size_t>> by_recording_;
    std::vector<std::uint32_t> recording_ids_;
};

struct MaterializedTriplet {
    ContextWindow anchor;
    ContextWindow positive;
    ContextWindow negative;
    TripletSource source = TripletSource::Labeled;
};

std::vector<TripletRecord> sample_labeled(const Dataset& data, std::size_t n, Rng& rng,
                                          std::vector<std::string>* warnings = nullptr);
std::vector<TripletRecord> sample_noise(const Dataset& data, std::size_t n, double sigma,
                                        Rng& rng);
std::vector<TripletRecord> sample_translation(const Dataset& data, std::size_t n, int max_shift_S,
                                              Rng& rng);
std::vector<TripletRecord> sample_mixing(const Dataset& data, std::size_t n, double alpha,
                                         Rng& rng);
std::vector<TripletRecord> sample_proximity(const Dataset& data, std::size_t n, double delta_t_s,
                                            Rng& rng);
std::vector<TripletRecord> sample_joint(const Dataset& data, std::size_t n,
                                        const SamplerConfig& cfg, Rng& rng,
                                        std::vector<std::string>* warnings = nullptr);

// Deterministic reconstruction of the three energy-domain windows.
MaterializedTriplet materialize_triplet(const Dataset& data, const TripletRecord& rec);

// The transforms, exposed for direct testing.
ContextWindow apply_noise(const ContextWindow& x, double sigma, std::uint64_t transform_seed);
ContextWindow apply_translation(const ContextWindow& x, int time_shift, int freq_shift);
ContextWindow apply_mixing(const ContextWindow& anchor, const ContextWindow& negative,
                           double alpha);

} // namespace tripletforge
