#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tripletforge/rng.hpp"

namespace tripletforge {

// Mean of window embeddings, not re-normalized; cosine distance downstream
// absorbs the scale.
std::vector<float> segment_embedding(const std::vector<std::vector<float>>& window_embeddings);

// 1 - cos similarity, with a 1e-12 norm floor; in [0, 2].
double cosine_distance(const std::vector<float>& a, const std::vector<float>& b);

struct Trial {
    std::uint64_t first = 0;
    std::uint64_t second = 0;
    bool is_target = false;
    double distance = 0.0;
};

struct SegmentEmbedding {
    std::uint64_t segment_id = 0;
    std::vector<float> vec;
    std::vector<int> labels;

    bool has_label(int c) const;
};

struct ClassTrialSet {
    int class_id = 0;
    int per_class = 0; // P actually used
    std::vector<Trial> trials;
};

// Per class: P present and P absent segments are sampled; all C(P,2)
// present-present pairs become targets and all P*P present-absent pairs
// nontargets, scored by cosine distance. P is lowered per class (with a
// warning) when a side runs short; classes with < 2 present segments are
// skipped and reported.
std::vector<ClassTrialSet> build_qbe_trials(const std::vector<SegmentEmbedding>& segments,
                                            int n_classes, int per_class,
                                            std::uint64_t seed,
                                            std::vector<std::string>* warnings = nullptr);

// Sort ascending by distance (ties keep the stable trial order) and average
// precision at each target's rank.
double average_precision(const std::vector<Trial>& trials);

double mean_average_precision(const std::vector<double>& per_class_ap);

// 100 * (value - baseline) / (topline - baseline).
double gap_recovery(double baseline, double topline, double value);

struct ClassifierSpec {
    int hidden_layers = 1; // 1 or 2
    int width = 512;
};

struct ClassifierTrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 32;
    int max_epochs = 40;
    int patience = 5; // early stop on dev mAP
    std::uint64_t seed = 0;
};

// Fixed per-window features for one segment plus its label set.
struct SegmentFeatures {
    std::uint64_t segment_id = 0;
    std::vector<std::vector<float>> windows;
    std::vector<int> labels;

    bool has_label(int c) const;
};

// Fully-connected multi-label classifier: hidden relu layers of `width`
// units and one independent logistic output per class, trained with
// per-class binary cross-entropy.
class ShallowClassifier {
public:
    ShallowClassifier(int input_dim, int n_classes, const ClassifierSpec& spec,
                      std::uint64_t seed);

    std::vector<float> predict(const std::vector<float>& features) const; // sigmoids
    int n_classes() const { return n_classes_; }
    int input_dim() const { return input_dim_; }

    // One gradient step on a mini-batch; returns the mean BCE.
    double train_step(const std::vector<const std::vector<float>*>& features,
                      const std::vector<std::vector<float>>& targets, double lr);

private:
    struct Layer {
        std::vector<float> w; // units x in
        std::vector<float> b;
        int in = 0, units = 0;
    };
    std::vector<float> forward(const std::vector<float>& x,
                               std::vector<std::vector<float>>* acts) const;

    int input_dim_ = 0;
    int n_classes_ = 0;
    std::vector<Layer> layers_;
    // Adam state, flat per layer
    std::vector<std::vector<float>> mw_, vw_, mb_, vb_;
    long step_ = 0;
};

ShallowClassifier train_shallow_classifier(const std::vector<SegmentFeatures>& train_segments,
                                           const std::vector<SegmentFeatures>& dev_segments,
                                           int n_classes, const ClassifierSpec& spec,
                                           const ClassifierTrainConfig& cfg);

struct ClassifierEval {
    std::vector<double> per_class_ap; // NaN where skipped
    double map = 0.0;
};

// Segment score per class = mean of window-level sigmoid outputs; AP ranks
// present over absent segments per class.
ClassifierEval eval_classifier(const ShallowClassifier& clf,
                               const std::vector<SegmentFeatures>& eval_segments);

// Light-supervision protocol: per trial seed, draw k segments per class from train,
// fit the classifier, evaluate; report the mean mAP over trials.
double light_supervision_protocol(const std::vector<SegmentFeatures>& train_segments,
                                  const std::vector<SegmentFeatures>& dev_segments,
                                  const std::vector<SegmentFeatures>& eval_segments,
                                  int n_classes, int k_per_class, int n_trials,
                                  std::uint64_t seed, const ClassifierSpec& spec,
                                  const ClassifierTrainConfig& cfg,
                                  std::vector<std::string>* warnings = nullptr);

} // namespace tripletforge
