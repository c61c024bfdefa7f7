#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "tripletforge/eval.hpp"
#include "tripletforge/frontend.hpp"
#include "tripletforge/metric.hpp"
#include "tripletforge/nn.hpp"
#include "tripletforge/sampler.hpp"
#include "tripletforge/synthcorpus.hpp"

namespace tripletforge {

// Feature shard path for a recording, derived from its WAV name.
std::string feature_path(const std::string& features_dir, const RecordingScript& rec);

// Render every recording and write WAVs plus the JSONL manifest.
void build_corpus_files(const CorpusManifest& manifest, const std::string& corpus_dir,
                        std::uint64_t seed);

// WAV -> mel energy shard for every recording in the manifest.
void featurize_corpus(const CorpusManifest& manifest, const std::string& corpus_dir,
                      const std::string& features_dir, const FeatureConfig& cfg);

// Energy-domain context windows for one split, labeled per the >=50%
// overlap rule when with_labels is set.
Dataset load_dataset(const CorpusManifest& manifest, const std::string& features_dir,
                     Split split, double label_overlap, bool with_labels);

// Per-recording segment embeddings (mean of window embeddings).
std::vector<SegmentEmbedding> embed_segments(const Network& net, const Dataset& data,
                                             double log_offset);

// Baseline representation: each log-mel window flattened to one vector,
// averaged per segment.
std::vector<SegmentEmbedding> logmel_segments(const Dataset& data, double log_offset);

// Per-window feature sets for shallow classifiers.
std::vector<SegmentFeatures> segment_features_embedded(const Network& net, const Dataset& data,
                                                       double log_offset);
std::vector<SegmentFeatures> segment_features_logmel(const Dataset& data, double log_offset);

double qbe_map(const std::vector<SegmentEmbedding>& segments, int n_classes, int per_class,
               std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

struct ExperimentConfig {
    CorpusConfig corpus;
    FeatureConfig feature;
    ModelSpec model;
    SamplerConfig sampler;

    double train_ratio = 0.6;
    double dev_ratio = 0.1;
    double eval_ratio = 0.3;

    std::size_t triplets_per_source = 6144;
    long train_steps = 800;
    int batch_size = 32;
    double learning_rate = 0.0; // 0 resolves from the mining policy
    double margin = 0.1;
    double log_offset = 0.01;

    int qbe_per_class = 100;
    int light_k = 20;
    int light_trials = 3;
    ClassifierTrainConfig classifier;

    std::uint64_t seed = 7;

    // Desk-scale conv net small enough to train every representation
    // within the experiment budget.
    static ExperimentConfig defaults();
};

struct ExperimentResult {
    double baseline_map = 0.0;
    double supervised_map = 0.0;
    double joint_map = 0.0;
    std::map<std::string, double> single_constraint_map; // noise/translation/mixing/proximity
    double sweep_s0_map = 0.0;
    double sweep_s10_map = 0.0;
    double light_joint_map = 0.0;
    double light_logmel_map = 0.0;
    double joint_recovery_pct = 0.0;
};

// End-to-end experiment: synthesize the corpus, train one model per
// sampling constraint with a shared architecture and seed, and evaluate
// every representation with the QbE and light-supervision protocols.
ExperimentResult run_paper_orderings(const ExperimentConfig& cfg, const std::string& work_dir,
                                     std::ostream* log = nullptr);

void write_experiment_report(const std::string& path, const ExperimentResult& r);

} // namespace tripletforge
