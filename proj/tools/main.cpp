// triplet-forge: corpus synthesis, triplet sampling, embedding training and
// retrieval evaluation from one binary. Subcommands compose through files:
//   gen-corpus -> featurize -> sample-triplets -> train -> embed
//                                   \-> eval-qbe / eval-classifier / ...
// Every run writes its resolved configuration next to its outputs so any
// result can be reproduced from the artifacts alone.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tripletforge/errors.hpp"
#include "tripletforge/pipeline.hpp"
#include "tripletforge/store.hpp"
#include "tripletforge/threads.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tripletforge;

namespace {

// ---------------------------------------------------------------------------
// Declarative run configuration. Unknown keys are rejected so typos fail
// loudly instead of silently running with defaults.

void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok |= key == a;
        if (!ok)
            throw ConfigError(std::string("unknown key '") + key + "' in config section '" +
                              section + "'");
    }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

LayerKind layer_kind_from(const std::string& s) {
    if (s == "conv2d") return LayerKind::Conv2d;
    if (s == "maxpool") return LayerKind::MaxPool;
    if (s == "relu") return LayerKind::Relu;
    if (s == "gap") return LayerKind::GlobalAvgPool;
    if (s == "dense") return LayerKind::Dense;
    throw ConfigError("unknown layer kind '" + s + "' (conv2d|maxpool|relu|gap|dense)");
}

const char* layer_kind_name(LayerKind k) {
    switch (k) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Relu: return "relu";
    case LayerKind::GlobalAvgPool: return "gap";
    case LayerKind::Dense: return "dense";
    }
    return "unknown";
}

struct TrainingConfig {
    long steps = 400;
    int batch_size = 32;
    double learning_rate = 0.0; // 0 = per-policy default
    double margin = 0.1;
    std::string mining = "auto"; // auto | on | off
};

struct RunConfig {
    std::uint64_t seed = 7;
    CorpusConfig corpus;
    double train_ratio = 0.6, dev_ratio = 0.1, eval_ratio = 0.3;
    FeatureConfig feature;
    SamplerConfig sampler;
    ModelSpec model;
    TrainingConfig training;
    int qbe_per_class = 100;
    int light_k = 20;
    int light_trials = 3;
    ClassifierSpec classifier_spec;
    ClassifierTrainConfig classifier_train;
    std::size_t triplets_per_source = 6144;

    RunConfig() {
        const auto d = ExperimentConfig::defaults();
        model = d.model;
        training.steps = d.train_steps;
        training.batch_size = d.batch_size;
        training.learning_rate = d.learning_rate;
        classifier_train = d.classifier;
        triplets_per_source = d.triplets_per_source;
    }
};

ModelSpec model_from_json(const json& j) {
    check_keys(j, "model", {"input_h", "input_w", "layers"});
    ModelSpec spec;
    spec.layers.clear();
    get_if(j, "input_h", spec.input_h);
    get_if(j, "input_w", spec.input_w);
    for (const auto& jl : j.at("layers")) {
        check_keys(jl, "model.layers[]", {"kind", "kernel", "channels", "stride", "units"});
        LayerSpec l;
        l.kind = layer_kind_from(jl.at("kind").get<std::string>());
        get_if(jl, "kernel", l.kernel);
        get_if(jl, "channels", l.channels);
        get_if(jl, "stride", l.stride);
        get_if(jl, "units", l.units);
        spec.layers.push_back(l);
    }
    spec.validate();
    return spec;
}

json model_to_json(const ModelSpec& spec) {
    json j;
    j["input_h"] = spec.input_h;
    j["input_w"] = spec.input_w;
    j["layers"] = json::array();
    for (const auto& l : spec.layers) {
        json jl;
        jl["kind"] = layer_kind_name(l.kind);
        if (l.kind == LayerKind::Conv2d || l.kind == LayerKind::MaxPool) jl["kernel"] = l.kernel;
        if (l.kind == LayerKind::Conv2d) {
            jl["channels"] = l.channels;
            jl["stride"] = l.stride;
        }
        if (l.kind == LayerKind::MaxPool) jl["stride"] = l.stride;
        if (l.kind == LayerKind::Dense) jl["units"] = l.units;
        j["layers"].push_back(jl);
    }
    return j;
}

RunConfig load_run_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config file: " + path);
    json j;
    try {
        j = json::parse(f);
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }

    check_keys(j, "<root>",
               {"seed", "corpus", "split", "feature", "sampler", "model", "training", "eval"});
    get_if(j, "seed", cfg.seed);

    if (j.contains("corpus")) {
        const auto& jc = j["corpus"];
        check_keys(jc, "corpus",
                   {"n_classes", "n_recordings", "duration_s", "min_events", "max_events",
                    "min_event_s", "max_event_s", "min_gain", "max_gain", "snr_lo_db",
                    "snr_hi_db", "pool_min", "pool_max", "min_segments", "label_overlap"});
        auto& c = cfg.corpus;
        get_if(jc, "n_classes", c.n_classes);
        get_if(jc, "n_recordings", c.n_recordings);
        get_if(jc, "duration_s", c.duration_s);
        get_if(jc, "min_events", c.min_events);
        get_if(jc, "max_events", c.max_events);
        get_if(jc, "min_event_s", c.min_event_s);
        get_if(jc, "max_event_s", c.max_event_s);
        get_if(jc, "min_gain", c.min_gain);
        get_if(jc, "max_gain", c.max_gain);
        get_if(jc, "snr_lo_db", c.snr_lo_db);
        get_if(jc, "snr_hi_db", c.snr_hi_db);
        get_if(jc, "pool_min", c.pool_min);
        get_if(jc, "pool_max", c.pool_max);
        get_if(jc, "min_segments", c.min_segments);
        get_if(jc, "label_overlap", c.label_overlap);
    }
    if (j.contains("split")) {
        const auto& js = j["split"];
        check_keys(js, "split", {"train", "dev", "eval"});
        get_if(js, "train", cfg.train_ratio);
        get_if(js, "dev", cfg.dev_ratio);
        get_if(js, "eval", cfg.eval_ratio);
    }
    if (j.contains("feature")) {
        const auto& jf = j["feature"];
        check_keys(jf, "feature",
                   {"window_ms", "hop_ms", "n_mels", "mel_lo_hz", "mel_hi_hz", "log_offset",
                    "sample_rate"});
        auto& f2 = cfg.feature;
        get_if(jf, "window_ms", f2.window_ms);
        get_if(jf, "hop_ms", f2.hop_ms);
        get_if(jf, "n_mels", f2.n_mels);
        get_if(jf, "mel_lo_hz", f2.mel_lo_hz);
        get_if(jf, "mel_hi_hz", f2.mel_hi_hz);
        get_if(jf, "log_offset", f2.log_offset);
        get_if(jf, "sample_rate", f2.sample_rate);
    }
    if (j.contains("sampler")) {
        const auto& js = j["sampler"];
        check_keys(js, "sampler", {"sigma", "freq_shift", "alpha", "delta_t_s", "weights"});
        get_if(js, "sigma", cfg.sampler.sigma);
        get_if(js, "freq_shift", cfg.sampler.freq_shift_S);
        get_if(js, "alpha", cfg.sampler.alpha);
        get_if(js, "delta_t_s", cfg.sampler.delta_t_s);
        if (js.contains("weights")) {
            const auto w = js["weights"].get<std::vector<double>>();
            if (w.size() != 5)
                throw ConfigError("sampler.weights must list 5 values "
                                  "(labeled, noise, translation, mixing, proximity)");
            for (std::size_t i = 0; i < 5; ++i) cfg.sampler.weights[i] = w[i];
        }
    }
    if (j.contains("model")) cfg.model = model_from_json(j["model"]);
    if (j.contains("training")) {
        const auto& jt = j["training"];
        check_keys(jt, "training",
                   {"steps", "batch_size", "learning_rate", "margin", "mining",
                    "triplets_per_source"});
        get_if(jt, "steps", cfg.training.steps);
        get_if(jt, "batch_size", cfg.training.batch_size);
        get_if(jt, "learning_rate", cfg.training.learning_rate);
        get_if(jt, "margin", cfg.training.margin);
        get_if(jt, "mining", cfg.training.mining);
        get_if(jt, "triplets_per_source", cfg.triplets_per_source);
        if (cfg.training.mining != "auto" && cfg.training.mining != "on" &&
            cfg.training.mining != "off")
            throw ConfigError("training.mining must be auto, on, or off");
    }
    if (j.contains("eval")) {
        const auto& je = j["eval"];
        check_keys(je, "eval",
                   {"qbe_per_class", "light_k", "light_trials", "classifier"});
        get_if(je, "qbe_per_class", cfg.qbe_per_class);
        get_if(je, "light_k", cfg.light_k);
        get_if(je, "light_trials", cfg.light_trials);
        if (je.contains("classifier")) {
            const auto& jc = je["classifier"];
            check_keys(jc, "eval.classifier",
                       {"hidden_layers", "width", "learning_rate", "batch_size", "max_epochs",
                        "patience"});
            get_if(jc, "hidden_layers", cfg.classifier_spec.hidden_layers);
            get_if(jc, "width", cfg.classifier_spec.width);
            get_if(jc, "learning_rate", cfg.classifier_train.learning_rate);
            get_if(jc, "batch_size", cfg.classifier_train.batch_size);
            get_if(jc, "max_epochs", cfg.classifier_train.max_epochs);
            get_if(jc, "patience", cfg.classifier_train.patience);
        }
    }
    return cfg;
}

json resolved_config_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["corpus"] = {{"n_classes", cfg.corpus.n_classes},
                   {"n_recordings", cfg.corpus.n_recordings},
                   {"duration_s", cfg.corpus.duration_s},
                   {"min_events", cfg.corpus.min_events},
                   {"max_events", cfg.corpus.max_events},
                   {"min_event_s", cfg.corpus.min_event_s},
                   {"max_event_s", cfg.corpus.max_event_s},
                   {"min_gain", cfg.corpus.min_gain},
                   {"max_gain", cfg.corpus.max_gain},
                   {"snr_lo_db", cfg.corpus.snr_lo_db},
                   {"snr_hi_db", cfg.corpus.snr_hi_db},
                   {"pool_min", cfg.corpus.pool_min},
                   {"pool_max", cfg.corpus.pool_max},
                   {"min_segments", cfg.corpus.min_segments},
                   {"label_overlap", cfg.corpus.label_overlap}};
    j["split"] = {{"train", cfg.train_ratio}, {"dev", cfg.dev_ratio}, {"eval", cfg.eval_ratio}};
    j["feature"] = {{"window_ms", cfg.feature.window_ms},
                    {"hop_ms", cfg.feature.hop_ms},
                    {"n_mels", cfg.feature.n_mels},
                    {"mel_lo_hz", cfg.feature.mel_lo_hz},
                    {"mel_hi_hz", cfg.feature.mel_hi_hz},
                    {"log_offset", cfg.feature.log_offset},
                    {"sample_rate", cfg.feature.sample_rate}};
    j["sampler"] = {{"sigma", cfg.sampler.sigma},
                    {"freq_shift", cfg.sampler.freq_shift_S},
                    {"alpha", cfg.sampler.alpha},
                    {"delta_t_s", cfg.sampler.delta_t_s},
                    {"weights", cfg.sampler.weights}};
    j["model"] = model_to_json(cfg.model);
    j["training"] = {{"steps", cfg.training.steps},
                     {"batch_size", cfg.training.batch_size},
                     {"learning_rate", cfg.training.learning_rate},
                     {"margin", cfg.training.margin},
                     {"mining", cfg.training.mining},
                     {"triplets_per_source", cfg.triplets_per_source}};
    j["eval"] = {{"qbe_per_class", cfg.qbe_per_class},
                 {"light_k", cfg.light_k},
                 {"light_trials", cfg.light_trials},
                 {"classifier",
                  {{"hidden_layers", cfg.classifier_spec.hidden_layers},
                   {"width", cfg.classifier_spec.width},
                   {"learning_rate", cfg.classifier_train.learning_rate},
                   {"batch_size", cfg.classifier_train.batch_size},
                   {"max_epochs", cfg.classifier_train.max_epochs},
                   {"patience", cfg.classifier_train.patience}}}};
    return j;
}

void emit_resolved_config(const RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "resolved_config.json").string();
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << resolved_config_json(cfg).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Artifact loading with actionable errors.

CorpusManifest load_manifest_or_hint(const std::string& corpus_dir) {
    const std::string path = (fs::path(corpus_dir) / "manifest.jsonl").string();
    if (!fs::exists(path))
        throw IoError("manifest not found at " + path + "; run `gen-corpus` first");
    return read_manifest(path);
}

Dataset load_split_or_hint(const CorpusManifest& m, const std::string& features_dir,
                           Split split, const RunConfig& cfg, bool with_labels) {
    for (const auto& rec : m.recordings) {
        if (rec.split != split) continue;
        if (!fs::exists(feature_path(features_dir, rec)))
            throw IoError("feature shard missing for " + rec.path + " under " + features_dir +
                          "; run `featurize` first");
    }
    return load_dataset(m, features_dir, split, cfg.corpus.label_overlap, with_labels);
}

Checkpoint load_checkpoint_or_hint(const std::string& path) {
    if (!fs::exists(path))
        throw IoError("checkpoint not found at " + path + "; run `train` first");
    return read_checkpoint(path);
}

std::vector<TripletRecord> load_triplets_or_hint(const std::string& path) {
    if (!fs::exists(path))
        throw IoError("triplet shard not found at " + path + "; run `sample-triplets` first");
    return read_triplets(path);
}

Split parse_split(const std::string& s) { return split_from_name(s); }

void write_metrics_csv(const std::string& out_dir,
                       const std::vector<std::pair<std::string, double>>& rows) {
    fs::create_directories(out_dir);
    const std::string path = (fs::path(out_dir) / "metrics.csv").string();
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "metric,value\n";
    f.precision(17);
    for (const auto& [k, v] : rows) f << k << "," << v << "\n";
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

// Per-window features of a split, either through a checkpoint or raw log-mel.
struct Representation {
    bool use_logmel = false;
    Checkpoint ckpt;

    std::vector<SegmentEmbedding> segments(const Dataset& d, double log_offset) const {
        if (use_logmel) return logmel_segments(d, log_offset);
        const Network net(ckpt.spec, ckpt.params);
        return embed_segments(net, d, log_offset);
    }
    std::vector<SegmentFeatures> features(const Dataset& d, double log_offset) const {
        if (use_logmel) return segment_features_logmel(d, log_offset);
        const Network net(ckpt.spec, ckpt.params);
        return segment_features_embedded(net, d, log_offset);
    }
};

Representation make_representation(const std::string& ckpt_path, bool logmel) {
    if (logmel != ckpt_path.empty())
        throw ConfigError(logmel ? "--logmel and --ckpt are mutually exclusive"
                                 : "either --ckpt <file> or --logmel is required");
    Representation rep;
    rep.use_logmel = logmel;
    if (!logmel) rep.ckpt = load_checkpoint_or_hint(ckpt_path);
    return rep;
}

std::vector<TripletRecord> run_sampler(const std::string& method, const Dataset& data,
                                       std::size_t n, const SamplerConfig& sampler, Rng& rng,
                                       std::vector<std::string>* warnings) {
    if (method == "labeled") return sample_labeled(data, n, rng, warnings);
    if (method == "noise") return sample_noise(data, n, sampler.sigma, rng);
    if (method == "translation") return sample_translation(data, n, sampler.freq_shift_S, rng);
    if (method == "mixing") return sample_mixing(data, n, sampler.alpha, rng);
    if (method == "proximity") return sample_proximity(data, n, sampler.delta_t_s, rng);
    if (method == "joint") return sample_joint(data, n, sampler, rng, warnings);
    throw ConfigError("unknown sampling method '" + method +
                      "' (labeled|noise|translation|mixing|proximity|joint)");
}

TrainResult run_training(Network& net, const Dataset& data,
                         const std::vector<TripletRecord>& triplets, const RunConfig& cfg) {
    TrainConfig tc;
    tc.loss.margin = cfg.training.margin;
    tc.loss.batch_size = cfg.training.batch_size;
    tc.loss.mining = cfg.training.mining == "auto" ? mining_policy_for(triplets)
                                                   : cfg.training.mining == "on";
    tc.learning_rate = cfg.training.learning_rate;
    tc.max_steps = cfg.training.steps;
    tc.log_offset = cfg.feature.log_offset;
    tc.seed = cfg.seed;
    return train(net, data, triplets, tc);
}

void write_trace_csv(const std::string& path, const TrainResult& r) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << "step,loss,active_triplet_fraction\n";
    f.precision(17);
    for (const auto& row : r.trace)
        f << row.step << "," << row.loss << "," << row.active_fraction << "\n";
}

ExperimentConfig experiment_config_from(const RunConfig& cfg) {
    ExperimentConfig e = ExperimentConfig::defaults();
    e.corpus = cfg.corpus;
    e.feature = cfg.feature;
    e.model = cfg.model;
    e.sampler = cfg.sampler;
    e.train_ratio = cfg.train_ratio;
    e.dev_ratio = cfg.dev_ratio;
    e.eval_ratio = cfg.eval_ratio;
    e.triplets_per_source = cfg.triplets_per_source;
    e.train_steps = cfg.training.steps;
    e.batch_size = cfg.training.batch_size;
    e.learning_rate = cfg.training.learning_rate;
    e.margin = cfg.training.margin;
    e.log_offset = cfg.feature.log_offset;
    e.qbe_per_class = cfg.qbe_per_class;
    e.light_k = cfg.light_k;
    e.light_trials = cfg.light_trials;
    e.classifier = cfg.classifier_train;
    e.seed = cfg.seed;
    return e;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"triplet-forge: semantic audio embeddings from unlabeled spectrograms"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = -1;
    app.add_option("--config", config_path, "JSON run configuration")->expected(1);
    app.add_option("--seed", seed, "override the config seed")
        ->each([&seed_set](const std::string&) { seed_set = true; });
    app.add_option("--threads", threads, "worker thread cap (1 = bitwise deterministic)");

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "synthesize the labeled corpus");
    std::string gen_out;
    gen->add_option("--out", gen_out, "corpus output directory")->required();

    // featurize
    auto* feat = app.add_subcommand("featurize", "mel-energy shards for every recording");
    std::string feat_corpus, feat_out;
    feat->add_option("--corpus", feat_corpus, "corpus directory")->required();
    feat->add_option("--out", feat_out, "feature output directory")->required();

    // sample-triplets
    auto* samp = app.add_subcommand("sample-triplets", "draw triplets under one constraint");
    std::string samp_corpus, samp_features, samp_method, samp_split = "train", samp_out;
    std::size_t samp_n = 0;
    double samp_sigma = -1.0, samp_alpha = -1.0, samp_delta = -1.0;
    int samp_shift = -1;
    samp->add_option("--corpus", samp_corpus)->required();
    samp->add_option("--features", samp_features)->required();
    samp->add_option("--method", samp_method,
                     "labeled|noise|translation|mixing|proximity|joint")->required();
    samp->add_option("--n", samp_n, "number of triplets")->required();
    samp->add_option("--split", samp_split, "train|dev|eval");
    samp->add_option("--sigma", samp_sigma, "noise width override");
    samp->add_option("--freq-shift", samp_shift, "max frequency shift override");
    samp->add_option("--alpha", samp_alpha, "mixing weight override");
    samp->add_option("--delta-t", samp_delta, "proximity window override (s)");
    samp->add_option("--out", samp_out, "triplet shard path")->required();

    // train
    auto* tr = app.add_subcommand("train", "train the embedding network");
    std::string tr_corpus, tr_features, tr_triplets, tr_out;
    long tr_steps = -1;
    double tr_lr = -1.0;
    std::string tr_mining;
    tr->add_option("--corpus", tr_corpus)->required();
    tr->add_option("--features", tr_features)->required();
    tr->add_option("--triplets", tr_triplets)->required();
    tr->add_option("--steps", tr_steps, "training steps override");
    tr->add_option("--lr", tr_lr, "learning rate override");
    tr->add_option("--mining", tr_mining, "auto|on|off");
    tr->add_option("--out", tr_out, "output directory (checkpoint + trace)")->required();

    // embed
    auto* em = app.add_subcommand("embed", "embed a split's windows with a checkpoint");
    std::string em_corpus, em_features, em_ckpt, em_split = "eval", em_out;
    em->add_option("--corpus", em_corpus)->required();
    em->add_option("--features", em_features)->required();
    em->add_option("--ckpt", em_ckpt)->required();
    em->add_option("--split", em_split, "train|dev|eval");
    em->add_option("--out", em_out, "embedding store path")->required();

    // eval-qbe
    auto* qb = app.add_subcommand("eval-qbe", "query-by-example retrieval mAP");
    std::string qb_corpus, qb_features, qb_ckpt, qb_split = "eval", qb_out;
    bool qb_logmel = false;
    qb->add_option("--corpus", qb_corpus)->required();
    qb->add_option("--features", qb_features)->required();
    qb->add_option("--ckpt", qb_ckpt, "embedding checkpoint");
    qb->add_flag("--logmel", qb_logmel, "evaluate raw log-mel features instead");
    qb->add_option("--split", qb_split, "train|dev|eval");
    qb->add_option("--out", qb_out, "output directory")->required();

    // eval-classifier
    auto* ec = app.add_subcommand("eval-classifier", "shallow classifier on fixed features");
    std::string ec_corpus, ec_features, ec_ckpt, ec_out;
    bool ec_logmel = false;
    ec->add_option("--corpus", ec_corpus)->required();
    ec->add_option("--features", ec_features)->required();
    ec->add_option("--ckpt", ec_ckpt, "embedding checkpoint");
    ec->add_flag("--logmel", ec_logmel, "use raw log-mel features instead");
    ec->add_option("--out", ec_out, "output directory")->required();

    // light-supervision
    auto* ls = app.add_subcommand("light-supervision", "k-per-class classifier protocol");
    std::string ls_corpus, ls_features, ls_ckpt, ls_out;
    bool ls_logmel = false;
    ls->add_option("--corpus", ls_corpus)->required();
    ls->add_option("--features", ls_features)->required();
    ls->add_option("--ckpt", ls_ckpt, "embedding checkpoint");
    ls->add_flag("--logmel", ls_logmel, "use raw log-mel features instead");
    ls->add_option("--out", ls_out, "output directory")->required();

    // sweep
    auto* sw = app.add_subcommand("sweep", "one-parameter grid over a sampling constraint");
    std::string sw_corpus, sw_features, sw_param, sw_grid, sw_out;
    sw->add_option("--corpus", sw_corpus)->required();
    sw->add_option("--features", sw_features)->required();
    sw->add_option("--param", sw_param, "sigma|freq-shift|alpha")->required();
    sw->add_option("--grid", sw_grid, "comma-separated values, e.g. 0,2,5,10")->required();
    sw->add_option("--out", sw_out, "output directory")->required();

    // report
    auto* rp = app.add_subcommand("report", "full comparison table from one recipe");
    std::string rp_out, rp_work;
    rp->add_option("--out", rp_out, "output directory")->required();
    rp->add_option("--work", rp_work, "working directory (default <out>/work)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (threads >= 0) set_thread_count(static_cast<std::size_t>(threads));

        RunConfig cfg = load_run_config(config_path);
        if (seed_set) cfg.seed = seed;
        std::vector<std::string> warnings;

        if (*gen) {
            cfg.feature.validate();
            CorpusManifest m = generate_corpus(cfg.corpus, cfg.seed);
            m = split_corpus(m, cfg.train_ratio, cfg.dev_ratio, cfg.eval_ratio, cfg.seed);
            validate_min_segments(m, cfg.corpus,
                                  kDefaultFrames * cfg.feature.hop_ms / 1000.0);
            build_corpus_files(m, gen_out, cfg.seed);
            emit_resolved_config(cfg, gen_out);
            std::cout << "wrote " << m.recordings.size() << " recordings to " << gen_out << "\n";
        } else if (*feat) {
            const auto m = load_manifest_or_hint(feat_corpus);
            featurize_corpus(m, feat_corpus, feat_out, cfg.feature);
            emit_resolved_config(cfg, feat_out);
            std::cout << "wrote " << m.recordings.size() << " feature shards to " << feat_out
                      << "\n";
        } else if (*samp) {
            if (samp_sigma >= 0.0) cfg.sampler.sigma = samp_sigma;
            if (samp_shift >= 0) cfg.sampler.freq_shift_S = samp_shift;
            if (samp_alpha >= 0.0) cfg.sampler.alpha = samp_alpha;
            if (samp_delta >= 0.0) cfg.sampler.delta_t_s = samp_delta;
            const auto m = load_manifest_or_hint(samp_corpus);
            const Dataset data =
                load_split_or_hint(m, samp_features, parse_split(samp_split), cfg, true);
            Rng rng = Rng::fork(cfg.seed, {0x5A11ULL});
            const auto triplets =
                run_sampler(samp_method, data, samp_n, cfg.sampler, rng, &warnings);
            print_warnings(warnings);
            fs::create_directories(fs::path(samp_out).parent_path().empty()
                                       ? "."
                                       : fs::path(samp_out).parent_path().string());
            write_triplets(samp_out, triplets);
            const std::string dir = fs::path(samp_out).parent_path().empty()
                                        ? "."
                                        : fs::path(samp_out).parent_path().string();
            emit_resolved_config(cfg, dir);
            std::cout << "wrote " << triplets.size() << " triplets to " << samp_out << "\n";
        } else if (*tr) {
            if (tr_steps > 0) cfg.training.steps = tr_steps;
            if (tr_lr >= 0.0) cfg.training.learning_rate = tr_lr;
            if (!tr_mining.empty()) cfg.training.mining = tr_mining;
            const auto m = load_manifest_or_hint(tr_corpus);
            const Dataset data = load_split_or_hint(m, tr_features, Split::Train, cfg, true);
            const auto triplets = load_triplets_or_hint(tr_triplets);

            ModelSpec spec = cfg.model;
            if (!data.examples().empty()) {
                spec.input_h = data.at(0).window.n_mels;
                spec.input_w = data.at(0).window.n_frames;
            }
            Network net(spec, Rng::fork(cfg.seed, {0x4E7ULL}).next_u64());
            const TrainResult result = run_training(net, data, triplets, cfg);

            fs::create_directories(tr_out);
            Checkpoint ckpt;
            ckpt.spec = net.spec();
            ckpt.params = net.params();
            write_checkpoint((fs::path(tr_out) / "model.ckpt").string(), ckpt);
            write_trace_csv((fs::path(tr_out) / "trace.csv").string(), result);
            emit_resolved_config(cfg, tr_out);
            write_metrics_csv(tr_out, {{"steps", static_cast<double>(result.steps)},
                                       {"final_loss",
                                        result.trace.empty() ? 0.0 : result.trace.back().loss},
                                       {"diverged", result.diverged ? 1.0 : 0.0}});
            if (result.diverged) std::cerr << "warning: training diverged; kept last finite state\n";
            std::cout << "wrote checkpoint and trace to " << tr_out << "\n";
        } else if (*em) {
            const auto m = load_manifest_or_hint(em_corpus);
            const Dataset data =
                load_split_or_hint(m, em_features, parse_split(em_split), cfg, false);
            const Checkpoint ckpt = load_checkpoint_or_hint(em_ckpt);
            const Network net(ckpt.spec, ckpt.params);

            std::vector<ContextWindow> logs(data.size());
            parallel_for(data.size(), [&](std::size_t i) {
                logs[i] = stabilized_log(data.at(i).window, cfg.feature.log_offset);
            });
            const auto embs = embed_batch(net, logs);

            EmbeddingStore store;
            store.dim = static_cast<std::uint32_t>(net.embedding_dim());
            for (std::size_t i = 0; i < data.size(); ++i) {
                const auto& e = data.at(i);
                store.ids.push_back((static_cast<std::uint64_t>(e.recording) << 32) |
                                    e.window_index);
                store.data.insert(store.data.end(), embs[i].begin(), embs[i].end());
            }
            const std::string dir = fs::path(em_out).parent_path().empty()
                                        ? "."
                                        : fs::path(em_out).parent_path().string();
            fs::create_directories(dir);
            write_embeddings(em_out, store);
            emit_resolved_config(cfg, dir);
            std::cout << "wrote " << store.ids.size() << " window embeddings to " << em_out
                      << "\n";
        } else if (*qb) {
            const auto m = load_manifest_or_hint(qb_corpus);
            const Dataset data =
                load_split_or_hint(m, qb_features, parse_split(qb_split), cfg, true);
            const Representation rep = make_representation(qb_ckpt, qb_logmel);
            const auto segments = rep.segments(data, cfg.feature.log_offset);
            const std::uint64_t qbe_seed = Rng::fork(cfg.seed, {0xE7A1ULL}).next_u64();
            const double map = qbe_map(segments, m.n_classes(), cfg.qbe_per_class, qbe_seed,
                                       &warnings);
            print_warnings(warnings);
            emit_resolved_config(cfg, qb_out);
            write_metrics_csv(qb_out, {{"qbe_map", map}});
            std::cout << "QbE mAP = " << map << "\n";
        } else if (*ec) {
            const auto m = load_manifest_or_hint(ec_corpus);
            const Dataset train_set = load_split_or_hint(m, ec_features, Split::Train, cfg, true);
            const Dataset dev_set = load_split_or_hint(m, ec_features, Split::Dev, cfg, true);
            const Dataset eval_set = load_split_or_hint(m, ec_features, Split::Eval, cfg, true);
            const Representation rep = make_representation(ec_ckpt, ec_logmel);

            const auto ftr = rep.features(train_set, cfg.feature.log_offset);
            const auto fdv = rep.features(dev_set, cfg.feature.log_offset);
            const auto fev = rep.features(eval_set, cfg.feature.log_offset);
            ClassifierTrainConfig ctc = cfg.classifier_train;
            ctc.seed = cfg.seed;
            const auto clf = train_shallow_classifier(ftr, fdv, m.n_classes(),
                                                      cfg.classifier_spec, ctc);
            const auto result = eval_classifier(clf, fev);

            fs::create_directories(ec_out);
            const std::string per_class = (fs::path(ec_out) / "per_class_ap.csv").string();
            std::ofstream f(per_class, std::ios::trunc);
            if (!f) throw IoError("cannot open for writing: " + per_class);
            f << "class_id,ap\n";
            f.precision(17);
            for (std::size_t c = 0; c < result.per_class_ap.size(); ++c)
                f << c << "," << result.per_class_ap[c] << "\n";
            emit_resolved_config(cfg, ec_out);
            write_metrics_csv(ec_out, {{"classifier_map", result.map}});
            std::cout << "classifier mAP = " << result.map << "\n";
        } else if (*ls) {
            const auto m = load_manifest_or_hint(ls_corpus);
            const Dataset train_set = load_split_or_hint(m, ls_features, Split::Train, cfg, true);
            const Dataset dev_set = load_split_or_hint(m, ls_features, Split::Dev, cfg, true);
            const Dataset eval_set = load_split_or_hint(m, ls_features, Split::Eval, cfg, true);
            const Representation rep = make_representation(ls_ckpt, ls_logmel);

            const auto ftr = rep.features(train_set, cfg.feature.log_offset);
            const auto fdv = rep.features(dev_set, cfg.feature.log_offset);
            const auto fev = rep.features(eval_set, cfg.feature.log_offset);
            ClassifierTrainConfig ctc = cfg.classifier_train;
            const double map = light_supervision_protocol(
                ftr, fdv, fev, m.n_classes(), cfg.light_k, cfg.light_trials, cfg.seed,
                cfg.classifier_spec, ctc, &warnings);
            print_warnings(warnings);
            emit_resolved_config(cfg, ls_out);
            write_metrics_csv(ls_out, {{"light_supervision_map", map},
                                       {"k_per_class", static_cast<double>(cfg.light_k)},
                                       {"trials", static_cast<double>(cfg.light_trials)}});
            std::cout << "light supervision mAP = " << map << "\n";
        } else if (*sw) {
            std::string method;
            if (sw_param == "sigma") method = "noise";
            else if (sw_param == "freq-shift") method = "translation";
            else if (sw_param == "alpha") method = "mixing";
            else throw ConfigError("unknown sweep parameter '" + sw_param +
                                   "' (sigma|freq-shift|alpha)");

            std::vector<double> grid;
            std::stringstream ss(sw_grid);
            for (std::string tok; std::getline(ss, tok, ',');) {
                try {
                    grid.push_back(std::stod(tok));
                } catch (const std::exception&) {
                    throw ConfigError("grid value '" + tok + "' is not a number");
                }
            }
            if (grid.empty()) throw ConfigError("sweep grid is empty");

            const auto m = load_manifest_or_hint(sw_corpus);
            const Dataset train_set = load_split_or_hint(m, sw_features, Split::Train, cfg, true);
            const Dataset eval_set = load_split_or_hint(m, sw_features, Split::Eval, cfg, true);

            ModelSpec spec = cfg.model;
            if (!train_set.examples().empty()) {
                spec.input_h = train_set.at(0).window.n_mels;
                spec.input_w = train_set.at(0).window.n_frames;
            }
            const std::uint64_t qbe_seed = Rng::fork(cfg.seed, {0xE7A1ULL}).next_u64();

            fs::create_directories(sw_out);
            const std::string path = (fs::path(sw_out) / "sweep.csv").string();
            std::ofstream f(path, std::ios::trunc);
            if (!f) throw IoError("cannot open for writing: " + path);
            f << "param,value,qbe_map\n";
            f.precision(17);
            for (const double v : grid) {
                SamplerConfig sampler = cfg.sampler;
                if (sw_param == "sigma") sampler.sigma = v;
                else if (sw_param == "freq-shift") sampler.freq_shift_S = static_cast<int>(v);
                else sampler.alpha = v;

                Rng rng = Rng::fork(cfg.seed, {0x5A11ULL});
                const auto triplets = run_sampler(method, train_set, cfg.triplets_per_source,
                                                  sampler, rng, nullptr);
                Network net(spec, Rng::fork(cfg.seed, {0x4E7ULL}).next_u64());
                run_training(net, train_set, triplets, cfg);
                const double map = qbe_map(embed_segments(net, eval_set, cfg.feature.log_offset),
                                           m.n_classes(), cfg.qbe_per_class, qbe_seed);
                f << sw_param << "," << v << "," << map << "\n";
                std::cout << sw_param << "=" << v << " -> QbE mAP " << map << "\n";
            }
            emit_resolved_config(cfg, sw_out);
        } else if (*rp) {
            const ExperimentConfig ecfg = experiment_config_from(cfg);
            const std::string work = rp_work.empty()
                                         ? (fs::path(rp_out) / "work").string()
                                         : rp_work;
            const auto result = run_paper_orderings(ecfg, work, &std::cout);
            fs::create_directories(rp_out);
            write_experiment_report((fs::path(rp_out) / "report.csv").string(), result);
            emit_resolved_config(cfg, rp_out);
            std::cout << "baseline " << result.baseline_map << " < joint " << result.joint_map
                      << " < supervised " << result.supervised_map << " (recovery "
                      << result.joint_recovery_pct << "%)\n";
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return 3;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
