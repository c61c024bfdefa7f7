// Python bindings for the core operations: feature frontend, triplet
// transforms, loss/mining, embedding networks, and retrieval metrics.
// Spectrograms cross the boundary as 2-D float32 numpy arrays (mels x
// frames); embeddings as 1-D float32 arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tripletforge/errors.hpp"
#include "tripletforge/eval.hpp"
#include "tripletforge/frontend.hpp"
#include "tripletforge/metric.hpp"
#include "tripletforge/nn.hpp"
#include "tripletforge/sampler.hpp"
#include "tripletforge/store.hpp"
#include "tripletforge/threads.hpp"

namespace py = pybind11;
using namespace tripletforge;

namespace {

using Array2f = py::array_t<float, py::array::c_style | py::array::forcecast>;
using Array1f = py::array_t<float, py::array::c_style | py::array::forcecast>;

ContextWindow window_from_array(const Array2f& a) {
    if (a.ndim() != 2) throw ConfigError("expected a 2-D (mels x frames) array");
    ContextWindow w;
    w.n_mels = static_cast<int>(a.shape(0));
    w.n_frames = static_cast<int>(a.shape(1));
    w.cells.assign(a.data(), a.data() + a.size());
    return w;
}

py::array_t<float> array_from_window(const ContextWindow& w) {
    py::array_t<float> a({w.n_mels, w.n_frames});
    std::copy(w.cells.begin(), w.cells.end(), a.mutable_data());
    return a;
}

py::array_t<float> array_from_spectrogram(const EnergySpectrogram& s) {
    py::array_t<float> a({s.n_mels, s.n_frames});
    std::copy(s.cells.begin(), s.cells.end(), a.mutable_data());
    return a;
}

std::vector<float> vec_from_array(const Array1f& a) {
    if (a.ndim() != 1) throw ConfigError("expected a 1-D array");
    return std::vector<float>(a.data(), a.data() + a.size());
}

// A checkpointed (or freshly initialized) embedding network.
class PyNetwork {
public:
    PyNetwork(std::uint64_t seed) : net_(ModelSpec::default_spec(), seed) {}
    explicit PyNetwork(Network net) : net_(std::move(net)) {}

    py::array_t<float> embed(const Array2f& log_window) const {
        const auto y = net_.forward(window_from_array(log_window).cells);
        py::array_t<float> out(static_cast<py::ssize_t>(y.size()));
        std::copy(y.begin(), y.end(), out.mutable_data());
        return out;
    }

    int embedding_dim() const { return net_.embedding_dim(); }

    void save(const std::string& path) const {
        Checkpoint ckpt;
        ckpt.spec = net_.spec();
        ckpt.params = net_.params();
        write_checkpoint(path, ckpt);
    }

    static PyNetwork load(const std::string& path) {
        const Checkpoint ckpt = read_checkpoint(path);
        return PyNetwork(Network(ckpt.spec, ckpt.params));
    }

private:
    Network net_;
};

} // namespace

PYBIND11_MODULE(_tripletforge, m) {
    m.doc() = "Semantic audio embeddings from weakly constrained triplets";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    m.def("set_thread_count", &set_thread_count, py::arg("n"),
          "Cap worker threads (1 = bitwise deterministic).");

    // --- frontend -----------------------------------------------------
    m.def(
        "mel_spectrogram",
        [](const Array1f& samples, int sample_rate) {
            Waveform w;
            w.samples = vec_from_array(samples);
            w.sample_rate = sample_rate;
            FeatureConfig cfg;
            return array_from_spectrogram(mel_spectrogram(w, cfg));
        },
        py::arg("samples"), py::arg("sample_rate") = 16000,
        "64-channel mel energy spectrogram (25 ms window, 10 ms hop).");

    m.def(
        "stabilized_log",
        [](const Array2f& x, double offset) {
            return array_from_window(stabilized_log(window_from_array(x), offset));
        },
        py::arg("x"), py::arg("offset") = 0.01, "Cellwise ln(x + offset).");

    m.def(
        "window_spectrogram",
        [](const Array2f& spec, int frames) {
            EnergySpectrogram s;
            s.n_mels = static_cast<int>(spec.shape(0));
            s.n_frames = static_cast<int>(spec.shape(1));
            s.cells.assign(spec.data(), spec.data() + spec.size());
            std::vector<py::array_t<float>> out;
            for (const auto& w : window_spectrogram(s, frames)) out.push_back(array_from_window(w));
            return out;
        },
        py::arg("spectrogram"), py::arg("frames") = kDefaultFrames,
        "Non-overlapping context windows; a trailing partial window is dropped.");

    m.def(
        "total_energy",
        [](const Array2f& x) { return total_energy(window_from_array(x)); }, py::arg("x"));

    // --- triplet transforms --------------------------------------------
    m.def(
        "apply_noise",
        [](const Array2f& x, double sigma, std::uint64_t seed) {
            return array_from_window(apply_noise(window_from_array(x), sigma, seed));
        },
        py::arg("x"), py::arg("sigma"), py::arg("seed"),
        "Multiplicative half-normal noise: cellwise x * (1 + |eps|).");

    m.def(
        "apply_translation",
        [](const Array2f& x, int time_shift, int freq_shift) {
            return array_from_window(
                apply_translation(window_from_array(x), time_shift, freq_shift));
        },
        py::arg("x"), py::arg("time_shift"), py::arg("freq_shift"),
        "Circular time shift and truncated frequency shift.");

    m.def(
        "apply_mixing",
        [](const Array2f& anchor, const Array2f& negative, double alpha) {
            return array_from_window(apply_mixing(window_from_array(anchor),
                                                  window_from_array(negative), alpha));
        },
        py::arg("anchor"), py::arg("negative"), py::arg("alpha"),
        "Energy-domain mix with the interferer scaled to alpha times the anchor energy.");

    // --- loss and mining -----------------------------------------------
    m.def(
        "triplet_loss",
        [](const std::vector<Array1f>& anchors, const std::vector<Array1f>& positives,
           const std::vector<Array1f>& negatives, double margin) {
            if (anchors.size() != positives.size() || anchors.size() != negatives.size())
                throw NumericError("triplet batch size mismatch");
            std::vector<EmbeddedTriplet> batch(anchors.size());
            for (std::size_t i = 0; i < anchors.size(); ++i) {
                batch[i].anchor = vec_from_array(anchors[i]);
                batch[i].positive = vec_from_array(positives[i]);
                batch[i].negative = vec_from_array(negatives[i]);
            }
            const auto r = triplet_loss(batch, margin);
            return py::make_tuple(r.loss, r.active_fraction);
        },
        py::arg("anchors"), py::arg("positives"), py::arg("negatives"), py::arg("margin") = 0.1,
        "Batch hinge loss; returns (loss, active_triplet_fraction).");

    m.def(
        "semi_hard_mine",
        [](const std::vector<Array1f>& anchors, const std::vector<Array1f>& positives,
           const std::vector<Array1f>& negatives) {
            auto conv = [](const std::vector<Array1f>& xs) {
                std::vector<std::vector<float>> out;
                for (const auto& x : xs) out.push_back(vec_from_array(x));
                return out;
            };
            return semi_hard_mine(conv(anchors), conv(positives), conv(negatives));
        },
        py::arg("anchors"), py::arg("positives"), py::arg("negatives"),
        "Per-anchor index of the reassigned negative within the batch.");

    // --- embedding network ---------------------------------------------
    py::class_<PyNetwork>(m, "Network")
        .def(py::init<std::uint64_t>(), py::arg("seed"),
             "Default architecture with He-uniform initialization.")
        .def("embed", &PyNetwork::embed, py::arg("log_window"),
             "Unit-norm embedding of one log-domain window.")
        .def_property_readonly("embedding_dim", &PyNetwork::embedding_dim)
        .def("save", &PyNetwork::save, py::arg("path"))
        .def_static("load", &PyNetwork::load, py::arg("path"));

    // --- retrieval metrics ----------------------------------------------
    m.def(
        "cosine_distance",
        [](const Array1f& a, const Array1f& b) {
            return cosine_distance(vec_from_array(a), vec_from_array(b));
        },
        py::arg("a"), py::arg("b"));

    m.def(
        "average_precision",
        [](const std::vector<double>& distances, const std::vector<bool>& is_target) {
            if (distances.size() != is_target.size())
                throw ConfigError("distances and is_target must have equal length");
            std::vector<Trial> trials(distances.size());
            for (std::size_t i = 0; i < trials.size(); ++i) {
                trials[i].distance = distances[i];
                trials[i].is_target = is_target[i];
            }
            return average_precision(trials);
        },
        py::arg("distances"), py::arg("is_target"),
        "AP of the ascending-distance ranking; ties keep the given order.");

    m.def("gap_recovery", &gap_recovery, py::arg("baseline"), py::arg("topline"),
          py::arg("value"));

    m.def(
        "segment_embedding",
        [](const std::vector<Array1f>& windows) {
            std::vector<std::vector<float>> ws;
            for (const auto& w : windows) ws.push_back(vec_from_array(w));
            const auto e = segment_embedding(ws);
            py::array_t<float> out(static_cast<py::ssize_t>(e.size()));
            std::copy(e.begin(), e.end(), out.mutable_data());
            return out;
        },
        py::arg("window_embeddings"), "Mean of window embeddings (not re-normalized).");
}
