#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tripletforge/frontend.hpp"

namespace tripletforge {

enum class EventFamily : std::uint8_t {
    Tone = 0,
    ChirpUp = 1,
    ChirpDown = 2,
    HarmonicStack = 3,
    AmNoiseBurst = 4,
    ClickTrain = 5,
};

const char* event_family_name(EventFamily f);

struct EventClass {
    int class_id = 0;
    EventFamily family = EventFamily::Tone;
    double fundamental_hz = 440.0; // tone / chirp start / stack fundamental
    double sweep_octaves = 0.0;    // chirp sweep extent over the event
    double mod_rate_hz = 0.0;      // AM modulation / click rate
};

struct Event {
    int class_id = 0;
    double onset_s = 0.0;
    double duration_s = 0.0;
    double gain = 1.0;
};

enum class Split : std::uint8_t { Train = 0, Dev = 1, Eval = 2 };

const char* split_name(Split s);
Split split_from_name(const std::string& name);

struct RecordingScript {
    std::uint32_t recording_id = 0;
    std::string path; // relative to the corpus directory
    double duration_s = 10.0;
    double background_snr_db = 20.0;
    std::vector<int> class_pool;
    std::vector<Event> events;
    Split split = Split::Train;
};

struct CorpusManifest {
    std::vector<EventClass> classes;
    std::vector<RecordingScript> recordings;

    int n_classes() const { return static_cast<int>(classes.size()); }
};

struct CorpusConfig {
    int n_classes = 8;
    int n_recordings = 200;
    double duration_s = 10.0;
    int min_events = 6;
    int max_events = 10;
    double min_event_s = 0.8;
    double max_event_s = 2.5;
    double min_gain = 0.3;
    double max_gain = 1.0;
    double snr_lo_db = 15.0;
    double snr_hi_db = 30.0;
    int pool_min = 2;
    int pool_max = 3;
    int min_segments = 4; // labeled windows per class per split
    double label_overlap = 0.5;
    int sample_rate = 16000;
    // Class affinity: pools grow along these edges so temporally proximate
    // windows correlate in class. Defaults to a ring over the classes.
    std::vector<std::pair<int, int>> affinity_edges;

    void validate() const;
    std::vector<std::pair<int, int>> effective_affinity() const;
};

// Parametric classes cycled over the six event families with distinct
// parameters, so classes are categories rather than fixed templates.
std::vector<EventClass> default_classes(int k);

// Deterministic (cfg, seed) -> scripts; no audio is written here.
CorpusManifest generate_corpus(const CorpusConfig& cfg, std::uint64_t seed);

// Deterministic recording-level partition by the given ratios.
CorpusManifest split_corpus(const CorpusManifest& m, double train_ratio, double dev_ratio,
                            double eval_ratio, std::uint64_t seed);

// Errors (naming the deficient class) if some class has fewer labeled
// windows than min_segments in some split.
void validate_min_segments(const CorpusManifest& m, const CorpusConfig& cfg,
                           double window_len_s);

// Synthesize the waveform of one recording; a pure function of
// (manifest classes, script, seed).
Waveform render_recording(const CorpusManifest& m, const RecordingScript& script,
                          std::uint64_t seed);

// Classes of events overlapping at least overlap_frac of the window.
std::vector<int> labels_for_window(const std::vector<Event>& events, double win_start_s,
                                   double win_len_s, double overlap_frac);

void write_manifest(const std::string& path, const CorpusManifest& m);
CorpusManifest read_manifest(const std::string& path);

} // namespace tripletforge
