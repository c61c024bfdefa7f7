#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "tripletforge/errors.hpp"
#include "tripletforge/rng.hpp"

namespace tripletforge {

template <typename T>
struct TensorT {
    std::vector<int> shape;
    std::vector<T> data;

    static TensorT zeros(std::vector<int> s) {
        TensorT t;
        t.shape = std::move(s);
        std::size_t n = 1;
        for (int d : t.shape) n *= static_cast<std::size_t>(d);
        t.data.assign(n, T(0));
        return t;
    }
    std::size_t numel() const { return data.size(); }
};

using Tensor = TensorT<float>;

enum class LayerKind : std::uint8_t {
    Conv2d = 0,
    MaxPool = 1,
    Relu = 2,
    GlobalAvgPool = 3,
    Dense = 4,
};

struct LayerSpec {
    LayerKind kind = LayerKind::Relu;
    int kernel = 0;   // conv2d / maxpool
    int channels = 0; // conv2d output channels
    int stride = 1;   // conv2d / maxpool
    int units = 0;    // dense
};

// Data-driven architecture. The layer list must end with a dense layer; the
// network L2-normalizes that head's output to produce the embedding.
struct ModelSpec {
    std::vector<LayerSpec> layers;
    int input_channels = 1;
    int input_h = 64; // F
    int input_w = 96; // T

    int embedding_dim() const;
    void validate() const;

    // conv3x3x16 / pool2 / conv3x3x32 / pool2 / conv3x3x64 / gap / dense(128)
    static ModelSpec default_spec();
};

struct TensorShape3 {
    int c = 0, h = 0, w = 0;
    std::size_t numel() const {
        return static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
               static_cast<std::size_t>(w);
    }
};

namespace detail {

inline int conv_out(int in, int kernel, int pad, int stride) {
    return (in + 2 * pad - kernel) / stride + 1;
}

inline int pool_out(int in, int kernel, int stride) {
    if (in < kernel) return 0;
    return (in - kernel) / stride + 1;
}

} // namespace detail

// Feed-forward embedding network with exact backpropagation. Parameters are
// stored per layer: conv = {weights [oc,ic,k,k], bias [oc]}, dense =
// {weights [units,in], bias [units]}. Reductions accumulate in double.
template <typename T>
class NetworkT {
public:
    NetworkT(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
        spec_.validate();
        infer_shapes();
        init_params(seed);
    }

    // Construct with existing parameters (checkpoint load).
    NetworkT(ModelSpec spec, std::vector<TensorT<T>> params) : spec_(std::move(spec)) {
        spec_.validate();
        infer_shapes();
        params_ = std::move(params);
        check_param_shapes();
    }

    const ModelSpec& spec() const { return spec_; }
    std::vector<TensorT<T>>& params() { return params_; }
    const std::vector<TensorT<T>>& params() const { return params_; }
    int embedding_dim() const { return spec_.embedding_dim(); }

    std::vector<TensorT<T>> zero_grads() const {
        std::vector<TensorT<T>> g;
        g.reserve(params_.size());
        for (const auto& p : params_) g.push_back(TensorT<T>::zeros(p.shape));
        return g;
    }

    // Accumulator: at least double, wider when T itself is wider (so a
    // high-precision instantiation keeps full precision end to end).
    using Acc = std::conditional_t<(sizeof(T) > sizeof(double)), T, double>;

    struct Cache {
        std::vector<std::vector<T>> acts;        // input to each layer
        std::vector<std::vector<int>> pool_idx;  // argmax per maxpool layer
        std::vector<T> head;                     // pre-normalization dense output
        Acc head_norm = 0.0;
        bool degenerate = false; // head norm below floor
    };

    // Input is a C*H*W buffer (channel-major). Output is the unit-norm
    // embedding. Pass a cache to enable backward().
    std::vector<T> forward(const std::vector<T>& input, Cache* cache = nullptr) const {
        if (input.size() != input_shape().numel())
            throw NumericError("network input size mismatch");
        Cache local;
        Cache& c = cache ? *cache : local;
        c.acts.clear();
        c.pool_idx.clear();

        std::vector<T> cur = input;
        TensorShape3 shape = input_shape();
        std::size_t pidx = 0;
        for (const auto& layer : spec_.layers) {
            c.acts.push_back(cur);
            switch (layer.kind) {
            case LayerKind::Conv2d:
                cur = conv_forward(cur, shape, layer, params_[pidx], params_[pidx + 1]);
                pidx += 2;
                shape = conv_shape(shape, layer);
                break;
            case LayerKind::MaxPool: {
                std::vector<int> argmax;
                cur = pool_forward(cur, shape, layer, argmax);
                c.pool_idx.push_back(std::move(argmax));
                shape = pool_shape(shape, layer);
                break;
            }
            case LayerKind::Relu:
                for (auto& v : cur) v = v > T(0) ? v : T(0);
                break;
            case LayerKind::GlobalAvgPool: {
                std::vector<T> out(static_cast<std::size_t>(shape.c));
                const std::size_t plane = static_cast<std::size_t>(shape.h) * shape.w;
                for (int ch = 0; ch < shape.c; ++ch) {
                    Acc acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i)
                        acc += static_cast<Acc>(cur[static_cast<std::size_t>(ch) * plane + i]);
                    out[static_cast<std::size_t>(ch)] =
                        static_cast<T>(acc / static_cast<Acc>(plane));
                }
                cur = std::move(out);
                shape = {shape.c, 1, 1};
                break;
            }
            case LayerKind::Dense:
                cur = dense_forward(cur, params_[pidx], params_[pidx + 1]);
                pidx += 2;
                shape = {layer.units, 1, 1};
                break;
            }
        }

        c.head = cur;
        Acc norm_sq = 0.0;
        for (const T v : cur) norm_sq += static_cast<Acc>(v) * static_cast<Acc>(v);
        const Acc norm = std::sqrt(norm_sq);
        c.head_norm = norm;
        std::vector<T> out(cur.size());
        if (norm < 1e-12) {
            // Degenerate pre-normalization output; emit a fixed unit vector.
            c.degenerate = true;
            out.assign(cur.size(), T(0));
            out[0] = T(1);
        } else {
            for (std::size_t i = 0; i < cur.size(); ++i)
                out[i] = static_cast<T>(static_cast<Acc>(cur[i]) / norm);
        }
        return out;
    }

    // Accumulates parameter gradients for one example into param_grads.
    void backward(const Cache& cache, const std::vector<T>& grad_embedding,
                  std::vector<TensorT<T>>& param_grads) const {
        if (param_grads.size() != params_.size())
            throw NumericError("gradient buffer shape mismatch");

        // Backprop through y = h / ||h||: dh = (g - y (y.g)) / ||h||.
        std::vector<T> grad(cache.head.size(), T(0));
        if (!cache.degenerate) {
            const Acc norm = cache.head_norm;
            Acc dot = 0.0;
            for (std::size_t i = 0; i < grad.size(); ++i)
                dot += static_cast<Acc>(grad_embedding[i]) *
                       (static_cast<Acc>(cache.head[i]) / norm);
            for (std::size_t i = 0; i < grad.size(); ++i) {
                const Acc y = static_cast<Acc>(cache.head[i]) / norm;
                grad[i] = static_cast<T>(
                    (static_cast<Acc>(grad_embedding[i]) - y * dot) / norm);
            }
        }

        // Walk layers in reverse, regenerating shapes.
        std::vector<TensorShape3> in_shapes;
        TensorShape3 shape = input_shape();
        for (const auto& layer : spec_.layers) {
            in_shapes.push_back(shape);
            shape = out_shape(shape, layer);
        }

        std::size_t pidx = params_.size();
        std::size_t pool = cache.pool_idx.size();
        for (std::size_t li = spec_.layers.size(); li-- > 0;) {
            const auto& layer = spec_.layers[li];
            const auto& in = cache.acts[li];
            const TensorShape3 in_shape = in_shapes[li];
            switch (layer.kind) {
            case LayerKind::Conv2d:
                pidx -= 2;
                grad = conv_backward(grad, in, in_shape, layer, params_[pidx],
                                     param_grads[pidx], param_grads[pidx + 1]);
                break;
            case LayerKind::MaxPool: {
                --pool;
                const auto& argmax = cache.pool_idx[pool];
                std::vector<T> din(in.size(), T(0));
                for (std::size_t i = 0; i < grad.size(); ++i)
                    din[static_cast<std::size_t>(argmax[i])] += grad[i];
                grad = std::move(din);
                break;
            }
            case LayerKind::Relu:
                for (std::size_t i = 0; i < grad.size(); ++i)
                    if (in[i] <= T(0)) grad[i] = T(0);
                break;
            case LayerKind::GlobalAvgPool: {
                const std::size_t plane =
                    static_cast<std::size_t>(in_shape.h) * in_shape.w;
                std::vector<T> din(in.size());
                for (int ch = 0; ch < in_shape.c; ++ch) {
                    const T g = static_cast<T>(
                        static_cast<Acc>(grad[static_cast<std::size_t>(ch)]) /
                        static_cast<Acc>(plane));
                    for (std::size_t i = 0; i < plane; ++i)
                        din[static_cast<std::size_t>(ch) * plane + i] = g;
                }
                grad = std::move(din);
                break;
            }
            case LayerKind::Dense:
                pidx -= 2;
                grad = dense_backward(grad, in, params_[pidx], param_grads[pidx],
                                      param_grads[pidx + 1]);
                break;
            }
        }
    }

    TensorShape3 input_shape() const {
        return {spec_.input_channels, spec_.input_h, spec_.input_w};
    }

private:
    static TensorShape3 conv_shape(TensorShape3 in, const LayerSpec& l) {
        const int pad = (l.kernel - 1) / 2;
        return {l.channels, detail::conv_out(in.h, l.kernel, pad, l.stride),
                detail::conv_out(in.w, l.kernel, pad, l.stride)};
    }
    static TensorShape3 pool_shape(TensorShape3 in, const LayerSpec& l) {
        return {in.c, detail::pool_out(in.h, l.kernel, l.stride),
                detail::pool_out(in.w, l.kernel, l.stride)};
    }
    static TensorShape3 out_shape(TensorShape3 in, const LayerSpec& l) {
        switch (l.kind) {
        case LayerKind::Conv2d: return conv_shape(in, l);
        case LayerKind::MaxPool: return pool_shape(in, l);
        case LayerKind::Relu: return in;
        case LayerKind::GlobalAvgPool: return {in.c, 1, 1};
        case LayerKind::Dense: return {l.units, 1, 1};
        }
        return in;
    }

    void infer_shapes() {
        TensorShape3 shape = input_shape();
        for (const auto& layer : spec_.layers) {
            shape = out_shape(shape, layer);
            if (shape.c <= 0 || shape.h <= 0 || shape.w <= 0)
                throw ConfigError("layer reduces feature map to zero size");
        }
    }

    void init_params(std::uint64_t seed) {
        TensorShape3 shape = input_shape();
        std::size_t layer_key = 0;
        for (const auto& layer : spec_.layers) {
            if (layer.kind == LayerKind::Conv2d) {
                const int fan_in = shape.c * layer.kernel * layer.kernel;
                auto w = TensorT<T>::zeros({layer.channels, shape.c, layer.kernel, layer.kernel});
                he_uniform(w, fan_in, seed, layer_key);
                params_.push_back(std::move(w));
                params_.push_back(TensorT<T>::zeros({layer.channels}));
            } else if (layer.kind == LayerKind::Dense) {
                const int fan_in = static_cast<int>(shape.numel());
                auto w = TensorT<T>::zeros({layer.units, fan_in});
                he_uniform(w, fan_in, seed, layer_key);
                params_.push_back(std::move(w));
                params_.push_back(TensorT<T>::zeros({layer.units}));
            }
            shape = out_shape(shape, layer);
            ++layer_key;
        }
    }

    static void he_uniform(TensorT<T>& w, int fan_in, std::uint64_t seed,
                           std::uint64_t layer_key) {
        Rng rng = Rng::fork(seed, {0x696E6974ULL, layer_key});
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        for (auto& v : w.data) v = static_cast<T>(rng.uniform_range(-limit, limit));
    }

    void check_param_shapes() const {
        std::size_t expect = 0;
        for (const auto& layer : spec_.layers)
            if (layer.kind == LayerKind::Conv2d || layer.kind == LayerKind::Dense) expect += 2;
        if (params_.size() != expect)
            throw ConfigError("checkpoint parameter count does not match model spec");
    }

    std::vector<T> conv_forward(const std::vector<T>& in, TensorShape3 s, const LayerSpec& l,
                                const TensorT<T>& w, const TensorT<T>& b) const {
        const TensorShape3 out_s = conv_shape(s, l);
        const int pad = (l.kernel - 1) / 2;
        std::vector<T> out(out_s.numel());
        const std::size_t in_plane = static_cast<std::size_t>(s.h) * s.w;
        const std::size_t out_plane = static_cast<std::size_t>(out_s.h) * out_s.w;
        for (int oc = 0; oc < out_s.c; ++oc) {
            const T* wk = &w.data[static_cast<std::size_t>(oc) * s.c * l.kernel * l.kernel];
            for (int oy = 0; oy < out_s.h; ++oy) {
                for (int ox = 0; ox < out_s.w; ++ox) {
                    Acc acc = static_cast<Acc>(b.data[static_cast<std::size_t>(oc)]);
                    for (int ic = 0; ic < s.c; ++ic) {
                        const T* plane = &in[static_cast<std::size_t>(ic) * in_plane];
                        const T* wc = wk + static_cast<std::size_t>(ic) * l.kernel * l.kernel;
                        for (int ky = 0; ky < l.kernel; ++ky) {
                            const int iy = oy * l.stride - pad + ky;
                            if (iy < 0 || iy >= s.h) continue;
                            for (int kx = 0; kx < l.kernel; ++kx) {
                                const int ix = ox * l.stride - pad + kx;
                                if (ix < 0 || ix >= s.w) continue;
                                acc += static_cast<Acc>(
                                           plane[static_cast<std::size_t>(iy) * s.w + ix]) *
                                       static_cast<Acc>(
                                           wc[static_cast<std::size_t>(ky) * l.kernel + kx]);
                            }
                        }
                    }
                    out[static_cast<std::size_t>(oc) * out_plane +
                        static_cast<std::size_t>(oy) * out_s.w + ox] = static_cast<T>(acc);
                }
            }
        }
        return out;
    }

    std::vector<T> conv_backward(const std::vector<T>& dout, const std::vector<T>& in,
                                 TensorShape3 s, const LayerSpec& l, const TensorT<T>& w,
                                 TensorT<T>& dw, TensorT<T>& db) const {
        const TensorShape3 out_s = conv_shape(s, l);
        const int pad = (l.kernel - 1) / 2;
        std::vector<T> din(in.size(), T(0));
        const std::size_t in_plane = static_cast<std::size_t>(s.h) * s.w;
        const std::size_t out_plane = static_cast<std::size_t>(out_s.h) * out_s.w;
        for (int oc = 0; oc < out_s.c; ++oc) {
            const std::size_t wbase = static_cast<std::size_t>(oc) * s.c * l.kernel * l.kernel;
            Acc bias_acc = 0.0;
            for (int oy = 0; oy < out_s.h; ++oy) {
                for (int ox = 0; ox < out_s.w; ++ox) {
                    const T g = dout[static_cast<std::size_t>(oc) * out_plane +
                                     static_cast<std::size_t>(oy) * out_s.w + ox];
                    if (g == T(0)) continue;
                    bias_acc += static_cast<Acc>(g);
                    for (int ic = 0; ic < s.c; ++ic) {
                        const T* plane = &in[static_cast<std::size_t>(ic) * in_plane];
                        T* dplane = &din[static_cast<std::size_t>(ic) * in_plane];
                        const std::size_t wcb =
                            wbase + static_cast<std::size_t>(ic) * l.kernel * l.kernel;
                        for (int ky = 0; ky < l.kernel; ++ky) {
                            const int iy = oy * l.stride - pad + ky;
                            if (iy < 0 || iy >= s.h) continue;
                            for (int kx = 0; kx < l.kernel; ++kx) {
                                const int ix = ox * l.stride - pad + kx;
                                if (ix < 0 || ix >= s.w) continue;
                                const std::size_t pi =
                                    static_cast<std::size_t>(iy) * s.w + ix;
                                const std::size_t wi =
                                    wcb + static_cast<std::size_t>(ky) * l.kernel + kx;
                                dw.data[wi] += g * plane[pi];
                                dplane[pi] += g * w.data[wi];
                            }
                        }
                    }
                }
            }
            db.data[static_cast<std::size_t>(oc)] += static_cast<T>(bias_acc);
        }
        return din;
    }

    static std::vector<T> pool_forward(const std::vector<T>& in, TensorShape3 s,
                                       const LayerSpec& l, std::vector<int>& argmax) {
        const TensorShape3 out_s = pool_shape(s, l);
        std::vector<T> out(out_s.numel());
        argmax.resize(out.size());
        const std::size_t in_plane = static_cast<std::size_t>(s.h) * s.w;
        const std::size_t out_plane = static_cast<std::size_t>(out_s.h) * out_s.w;
        for (int c = 0; c < s.c; ++c) {
            for (int oy = 0; oy < out_s.h; ++oy) {
                for (int ox = 0; ox < out_s.w; ++ox) {
                    T best = in[static_cast<std::size_t>(c) * in_plane +
                                static_cast<std::size_t>(oy * l.stride) * s.w + ox * l.stride];
                    std::size_t best_i = static_cast<std::size_t>(c) * in_plane +
                                         static_cast<std::size_t>(oy * l.stride) * s.w +
                                         static_cast<std::size_t>(ox * l.stride);
                    for (int ky = 0; ky < l.kernel; ++ky) {
                        for (int kx = 0; kx < l.kernel; ++kx) {
                            const std::size_t i =
                                static_cast<std::size_t>(c) * in_plane +
                                static_cast<std::size_t>(oy * l.stride + ky) * s.w +
                                static_cast<std::size_t>(ox * l.stride + kx);
                            if (in[i] > best) {
                                best = in[i];
                                best_i = i;
                            }
                        }
                    }
                    const std::size_t oi = static_cast<std::size_t>(c) * out_plane +
                                           static_cast<std::size_t>(oy) * out_s.w + ox;
                    out[oi] = best;
                    argmax[oi] = static_cast<int>(best_i);
                }
            }
        }
        return out;
    }

    static std::vector<T> dense_forward(const std::vector<T>& in, const TensorT<T>& w,
                                        const TensorT<T>& b) {
        const int units = w.shape[0];
        const int dim = w.shape[1];
        std::vector<T> out(static_cast<std::size_t>(units));
        for (int u = 0; u < units; ++u) {
            const T* row = &w.data[static_cast<std::size_t>(u) * dim];
            Acc acc = static_cast<Acc>(b.data[static_cast<std::size_t>(u)]);
            for (int i = 0; i < dim; ++i)
                acc += static_cast<Acc>(row[i]) * static_cast<Acc>(in[static_cast<std::size_t>(i)]);
            out[static_cast<std::size_t>(u)] = static_cast<T>(acc);
        }
        return out;
    }

    static std::vector<T> dense_backward(const std::vector<T>& dout, const std::vector<T>& in,
                                         const TensorT<T>& w, TensorT<T>& dw, TensorT<T>& db) {
        const int units = w.shape[0];
        const int dim = w.shape[1];
        std::vector<T> din(static_cast<std::size_t>(dim), T(0));
        for (int u = 0; u < units; ++u) {
            const T g = dout[static_cast<std::size_t>(u)];
            db.data[static_cast<std::size_t>(u)] += g;
            const T* row = &w.data[static_cast<std::size_t>(u) * dim];
            T* drow = &dw.data[static_cast<std::size_t>(u) * dim];
            for (int i = 0; i < dim; ++i) {
                drow[i] += g * in[static_cast<std::size_t>(i)];
                din[static_cast<std::size_t>(i)] += g * row[i];
            }
        }
        return din;
    }

    ModelSpec spec_;
    std::vector<TensorT<T>> params_;
};

using Network = NetworkT<float>;

// Standard Adam with bias correction.
template <typename T>
struct AdamStateT {
    std::vector<TensorT<T>> m;
    std::vector<TensorT<T>> v;
    long step = 0;
    double learning_rate = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static AdamStateT init_like(const std::vector<TensorT<T>>& params, double lr) {
        AdamStateT s;
        s.learning_rate = lr;
        for (const auto& p : params) {
            s.m.push_back(TensorT<T>::zeros(p.shape));
            s.v.push_back(TensorT<T>::zeros(p.shape));
        }
        return s;
    }
};

using AdamState = AdamStateT<float>;

template <typename T>
void adam_step(std::vector<TensorT<T>>& params, const std::vector<TensorT<T>>& grads,
               AdamStateT<T>& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw NumericError("adam_step shape mismatch");
    for (const auto& g : grads)
        for (const T v : g.data)
            if (!std::isfinite(static_cast<double>(v)))
                throw NumericError("non-finite gradient in adam_step");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& m = state.m[p].data;
        auto& v = state.v[p].data;
        auto& w = params[p].data;
        const auto& g = grads[p].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = state.beta1 * static_cast<double>(m[i]) + (1.0 - state.beta1) * gi;
            const double vi =
                state.beta2 * static_cast<double>(v[i]) + (1.0 - state.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            w[i] = static_cast<T>(static_cast<double>(w[i]) -
                                  state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon));
        }
    }
}

} // namespace tripletforge
