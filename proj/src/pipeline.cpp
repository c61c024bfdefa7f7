#include "tripletforge/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "tripletforge/errors.hpp"
#include "tripletforge/store.hpp"
#include "tripletforge/threads.hpp"

namespace fs = std::filesystem;

namespace tripletforge {

std::string feature_path(const std::string& features_dir, const RecordingScript& rec) {
    fs::path p(rec.path);
    return (fs::path(features_dir) / p.stem()).string() + ".spec";
}

void build_corpus_files(const CorpusManifest& manifest, const std::string& corpus_dir,
                        std::uint64_t seed) {
    fs::create_directories(corpus_dir);
    parallel_for(manifest.recordings.size(), [&](std::size_t i) {
        const auto& rec = manifest.recordings[i];
        const Waveform w = render_recording(manifest, rec, seed);
        write_wav((fs::path(corpus_dir) / rec.path).string(), w);
    });
    write_manifest((fs::path(corpus_dir) / "manifest.jsonl").string(), manifest);
}

void featurize_corpus(const CorpusManifest& manifest, const std::string& corpus_dir,
                      const std::string& features_dir, const FeatureConfig& cfg) {
    fs::create_directories(features_dir);
    parallel_for(manifest.recordings.size(), [&](std::size_t i) {
        const auto& rec = manifest.recordings[i];
        const Waveform w = read_wav((fs::path(corpus_dir) / rec.path).string());
        write_features(feature_path(features_dir, rec), mel_spectrogram(w, cfg));
    });
}

Dataset load_dataset(const CorpusManifest& manifest, const std::string& features_dir,
                     Split split, double label_overlap, bool with_labels) {
    std::vector<Example> examples;
    for (const auto& rec : manifest.recordings) {
        if (rec.split != split) continue;
        const EnergySpectrogram spec = read_features(feature_path(features_dir, rec));
        auto windows = window_spectrogram(spec, kDefaultFrames, rec.recording_id);
        const double win_len = kDefaultFrames * spec.frame_hop_s;
        for (std::size_t k = 0; k < windows.size(); ++k) {
            Example ex;
            ex.window = std::move(windows[k]);
            ex.recording = rec.recording_id;
            ex.window_index = static_cast<std::uint32_t>(k);
            ex.start_time_s = ex.window.start_time_s;
            if (with_labels) {
                ex.labeled = true;
                ex.labels =
                    labels_for_window(rec.events, ex.start_time_s, win_len, label_overlap);
            }
            examples.push_back(std::move(ex));
        }
    }
    return Dataset(std::move(examples));
}

namespace {

// Window embeddings grouped per recording; the embed function maps a
// log-domain window to its feature vector.
template <typename EmbedFn>
std::vector<SegmentEmbedding> segments_from(const Dataset& data, double log_offset,
                                            EmbedFn&& embed) {
    std::vector<SegmentEmbedding> out;
    for (const std::uint32_t rid : data.recording_ids()) {
        const auto& idx = data.by_recording().at(rid);
        std::vector<std::vector<float>> embs(idx.size());
        std::set<int> labels;
        parallel_for(idx.size(), [&](std::size_t k) {
            embs[k] = embed(stabilized_log(data.at(idx[k]).window, log_offset));
        });
        for (const std::size_t i : idx)
            labels.insert(data.at(i).labels.begin(), data.at(i).labels.end());
        SegmentEmbedding seg;
        seg.segment_id = rid;
        seg.vec = segment_embedding(embs);
        seg.labels.assign(labels.begin(), labels.end());
        out.push_back(std::move(seg));
    }
    return out;
}

template <typename EmbedFn>
std::vector<SegmentFeatures> features_from(const Dataset& data, double log_offset,
                                           EmbedFn&& embed) {
    std::vector<SegmentFeatures> out;
    for (const std::uint32_t rid : data.recording_ids()) {
        const auto& idx = data.by_recording().at(rid);
        SegmentFeatures seg;
        seg.segment_id = rid;
        seg.windows.resize(idx.size());
        std::set<int> labels;
        parallel_for(idx.size(), [&](std::size_t k) {
            seg.windows[k] = embed(stabilized_log(data.at(idx[k]).window, log_offset));
        });
        for (const std::size_t i : idx)
            labels.insert(data.at(i).labels.begin(), data.at(i).labels.end());
        seg.labels.assign(labels.begin(), labels.end());
        out.push_back(std::move(seg));
    }
    return out;
}

} // namespace

std::vector<SegmentEmbedding> embed_segments(const Network& net, const Dataset& data,
                                             double log_offset) {
    return segments_from(data, log_offset,
                         [&net](const ContextWindow& w) { return net.forward(w.cells); });
}

std::vector<SegmentEmbedding> logmel_segments(const Dataset& data, double log_offset) {
    return segments_from(data, log_offset,
                         [](const ContextWindow& w) { return w.cells; });
}

std::vector<SegmentFeatures> segment_features_embedded(const Network& net, const Dataset& data,
                                                       double log_offset) {
    return features_from(data, log_offset,
                         [&net](const ContextWindow& w) { return net.forward(w.cells); });
}

std::vector<SegmentFeatures> segment_features_logmel(const Dataset& data, double log_offset) {
    return features_from(data, log_offset,
                         [](const ContextWindow& w) { return w.cells; });
}

double qbe_map(const std::vector<SegmentEmbedding>& segments, int n_classes, int per_class,
               std::uint64_t seed, std::vector<std::string>* warnings) {
    const auto trial_sets = build_qbe_trials(segments, n_classes, per_class, seed, warnings);
    if (trial_sets.empty()) throw ConfigError("no class produced QbE trials");
    std::vector<double> aps;
    aps.reserve(trial_sets.size());
    for (const auto& set : trial_sets) aps.push_back(average_precision(set.trials));
    return mean_average_precision(aps);
}

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig cfg;
    cfg.corpus.n_classes = 8;
    cfg.corpus.n_recordings = 200;
    // Enough background noise that raw log-mel features are a beatable
    // baseline while events stay clearly audible.
    cfg.corpus.snr_lo_db = 6.0;
    cfg.corpus.snr_hi_db = 18.0;
    // Tight proximity window: nearby windows usually cover the same event.
    cfg.sampler.delta_t_s = 2.0;
    cfg.model.layers = {
        {LayerKind::Conv2d, 3, 8, 1, 0},
        {LayerKind::Relu, 0, 0, 1, 0},
        {LayerKind::MaxPool, 4, 0, 4, 0},
        {LayerKind::Conv2d, 3, 16, 1, 0},
        {LayerKind::Relu, 0, 0, 1, 0},
        {LayerKind::MaxPool, 4, 0, 4, 0},
        {LayerKind::Conv2d, 3, 32, 1, 0},
        {LayerKind::Relu, 0, 0, 1, 0},
        {LayerKind::GlobalAvgPool, 0, 0, 1, 0},
        {LayerKind::Dense, 0, 0, 1, 64},
    };
    cfg.classifier.max_epochs = 12;
    cfg.classifier.patience = 3;
    return cfg;
}

namespace {

struct TrainedRepresentation {
    Network net;
    TrainResult result;
};

TrainedRepresentation train_representation(const ExperimentConfig& cfg, const Dataset& train_set,
                                           const std::vector<TripletRecord>& triplets,
                                           bool mining, std::ostream* log,
                                           const std::string& name) {
    Network net(cfg.model, Rng::fork(cfg.seed, {0x4E7ULL}).next_u64());
    TrainConfig tc;
    tc.loss.margin = cfg.margin;
    tc.loss.mining = mining;
    tc.loss.batch_size = cfg.batch_size;
    tc.learning_rate = cfg.learning_rate;
    tc.max_steps = cfg.train_steps;
    tc.log_offset = cfg.log_offset;
    tc.seed = cfg.seed;
    TrainResult res = train(net, train_set, triplets, tc);
    if (log) {
        const auto& tr = res.trace;
        const double first = tr.empty() ? 0.0 : tr.front().loss;
        const double last = tr.empty() ? 0.0 : tr.back().loss;
        *log << "  trained " << name << ": steps=" << res.steps << " loss " << first << " -> "
             << last << (res.diverged ? " (diverged)" : "") << "\n";
    }
    return {std::move(net), std::move(res)};
}

} // namespace

ExperimentResult run_paper_orderings(const ExperimentConfig& cfg, const std::string& work_dir,
                                     std::ostream* log) {
    fs::create_directories(work_dir);
    const std::string corpus_dir = (fs::path(work_dir) / "corpus").string();
    const std::string features_dir = (fs::path(work_dir) / "features").string();

    if (log) *log << "generating corpus...\n";
    CorpusManifest manifest = generate_corpus(cfg.corpus, cfg.seed);
    manifest = split_corpus(manifest, cfg.train_ratio, cfg.dev_ratio, cfg.eval_ratio, cfg.seed);
    validate_min_segments(manifest, cfg.corpus, kDefaultFrames * cfg.feature.hop_ms / 1000.0);
    build_corpus_files(manifest, corpus_dir, cfg.seed);

    if (log) *log << "featurizing...\n";
    featurize_corpus(manifest, corpus_dir, features_dir, cfg.feature);

    const Dataset train_labeled =
        load_dataset(manifest, features_dir, Split::Train, cfg.corpus.label_overlap, true);
    const Dataset eval_set =
        load_dataset(manifest, features_dir, Split::Eval, cfg.corpus.label_overlap, true);
    const Dataset dev_set =
        load_dataset(manifest, features_dir, Split::Dev, cfg.corpus.label_overlap, true);

    ExperimentResult result;
    const int K = manifest.n_classes();
    const std::uint64_t qbe_seed = Rng::fork(cfg.seed, {0xE7A1ULL}).next_u64();

    // Baseline: raw log-mel features.
    result.baseline_map =
        qbe_map(logmel_segments(eval_set, cfg.log_offset), K, cfg.qbe_per_class, qbe_seed);
    if (log) *log << "  baseline (log-mel) QbE mAP = " << result.baseline_map << "\n";

    auto evaluate = [&](const Network& net) {
        return qbe_map(embed_segments(net, eval_set, cfg.log_offset), K, cfg.qbe_per_class,
                       qbe_seed);
    };
    auto sampling_rng = [&](std::uint64_t tag) { return Rng::fork(cfg.seed, {0x5A11ULL, tag}); };

    // Supervised topline.
    {
        Rng rng = sampling_rng(0);
        const auto triplets = sample_labeled(train_labeled, cfg.triplets_per_source, rng);
        const auto rep = train_representation(cfg, train_labeled, triplets, true, log, "supervised");
        result.supervised_map = evaluate(rep.net);
    }

    // Single-constraint models.
    Network* joint_for_light = nullptr;
    Network joint_net(cfg.model, 1); // placeholder, replaced below
    {
        Rng rng = sampling_rng(1);
        const auto triplets = sample_noise(train_labeled, cfg.triplets_per_source,
                                           cfg.sampler.sigma, rng);
        const auto rep = train_representation(cfg, train_labeled, triplets, false, log, "noise");
        result.single_constraint_map["noise"] = evaluate(rep.net);
    }
    {
        Rng rng = sampling_rng(2);
        const auto triplets = sample_translation(train_labeled, cfg.triplets_per_source,
                                                 cfg.sampler.freq_shift_S, rng);
        const auto rep =
            train_representation(cfg, train_labeled, triplets, false, log, "translation");
        result.single_constraint_map["translation"] = evaluate(rep.net);
        result.sweep_s10_map = result.single_constraint_map["translation"];
    }
    {
        Rng rng = sampling_rng(3);
        const auto triplets =
            sample_mixing(train_labeled, cfg.triplets_per_source, cfg.sampler.alpha, rng);
        const auto rep = train_representation(cfg, train_labeled, triplets, false, log, "mixing");
        result.single_constraint_map["mixing"] = evaluate(rep.net);
    }
    {
        Rng rng = sampling_rng(4);
        const auto triplets = sample_proximity(train_labeled, cfg.triplets_per_source,
                                               cfg.sampler.delta_t_s, rng);
        const auto rep =
            train_representation(cfg, train_labeled, triplets, true, log, "proximity");
        result.single_constraint_map["proximity"] = evaluate(rep.net);
    }

    // Sweep point S=0 (time-only translation).
    {
        Rng rng = sampling_rng(5);
        const auto triplets = sample_translation(train_labeled, cfg.triplets_per_source, 0, rng);
        const auto rep =
            train_representation(cfg, train_labeled, triplets, false, log, "translation S=0");
        result.sweep_s0_map = evaluate(rep.net);
    }

    // Joint unsupervised: equal mixture of the four unsupervised sources.
    {
        Rng rng = sampling_rng(6);
        SamplerConfig joint_cfg = cfg.sampler;
        joint_cfg.weights = {0.0, 1.0, 1.0, 1.0, 1.0};
        const auto triplets =
            sample_joint(train_labeled, 4 * cfg.triplets_per_source, joint_cfg, rng);
        auto rep = train_representation(cfg, train_labeled, triplets, true, log, "joint");
        result.joint_map = evaluate(rep.net);
        joint_net = std::move(rep.net);
        joint_for_light = &joint_net;
    }

    result.joint_recovery_pct =
        gap_recovery(result.baseline_map, result.supervised_map, result.joint_map);

    // Light supervision: 1-layer classifier on joint embeddings vs log-mel.
    if (log) *log << "light supervision protocol...\n";
    ClassifierSpec clf_spec;
    clf_spec.hidden_layers = 1;
    clf_spec.width = 512;
    const auto train_emb = segment_features_embedded(*joint_for_light, train_labeled, cfg.log_offset);
    const auto dev_emb = segment_features_embedded(*joint_for_light, dev_set, cfg.log_offset);
    const auto eval_emb = segment_features_embedded(*joint_for_light, eval_set, cfg.log_offset);
    result.light_joint_map =
        light_supervision_protocol(train_emb, dev_emb, eval_emb, K, cfg.light_k,
                                   cfg.light_trials, cfg.seed, clf_spec, cfg.classifier);
    const auto train_lm = segment_features_logmel(train_labeled, cfg.log_offset);
    const auto dev_lm = segment_features_logmel(dev_set, cfg.log_offset);
    const auto eval_lm = segment_features_logmel(eval_set, cfg.log_offset);
    result.light_logmel_map =
        light_supervision_protocol(train_lm, dev_lm, eval_lm, K, cfg.light_k, cfg.light_trials,
                                   cfg.seed, clf_spec, cfg.classifier);
    if (log)
        *log << "  light supervision mAP: joint=" << result.light_joint_map
             << " log-mel=" << result.light_logmel_map << "\n";

    return result;
}

void write_experiment_report(const std::string& path, const ExperimentResult& r) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "representation,qbe_map,recovery_pct\n";
    f << "logmel_baseline," << r.baseline_map << ",0\n";
    for (const auto& [name, v] : r.single_constraint_map)
        f << name << "," << v << ","
          << gap_recovery(r.baseline_map, r.supervised_map, v) << "\n";
    f << "joint_unsupervised," << r.joint_map << "," << r.joint_recovery_pct << "\n";
    f << "supervised_topline," << r.supervised_map << ",100\n";
    f << "\nsweep,S,qbe_map\n";
    f << "translation,0," << r.sweep_s0_map << "\n";
    f << "translation,10," << r.sweep_s10_map << "\n";
    f << "\nlight_supervision,features,map\n";
    f << "light,joint_unsupervised," << r.light_joint_map << "\n";
    f << "light,logmel," << r.light_logmel_map << "\n";
    if (!f) throw IoError("short write: " + path);
}

} // namespace tripletforge
