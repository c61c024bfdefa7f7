#include "tripletforge/nn.hpp"

namespace tripletforge {

int ModelSpec::embedding_dim() const {
    if (layers.empty()) return 0;
    return layers.back().units;
}

void ModelSpec::validate() const {
    if (layers.empty() || layers.back().kind != LayerKind::Dense)
        throw ConfigError("model spec must end with a dense embedding head");
    if (layers.back().units < 1) throw ConfigError("embedding dimension must be >= 1");
    if (input_channels < 1 || input_h < 1 || input_w < 1)
        throw ConfigError("model input shape must be positive");
    for (const auto& l : layers) {
        switch (l.kind) {
        case LayerKind::Conv2d:
            if (l.kernel < 1 || l.channels < 1 || l.stride < 1)
                throw ConfigError("conv2d layer requires kernel, channels, stride >= 1");
            break;
        case LayerKind::MaxPool:
            if (l.kernel < 1 || l.stride < 1)
                throw ConfigError("maxpool layer requires kernel, stride >= 1");
            break;
        case LayerKind::Dense:
            if (l.units < 1) throw ConfigError("dense layer requires units >= 1");
            break;
        case LayerKind::Relu:
        case LayerKind::GlobalAvgPool:
            break;
        }
    }
}

ModelSpec ModelSpec::default_spec() {
    ModelSpec s;
    s.layers = {
        {LayerKind::Conv2d, 3, 16, 1, 0},
        {LayerKind::Relu, 0, 0, 1, 0},
        {LayerKind::MaxPool, 2, 0, 2, 0},
        {LayerKind::Conv2d, 3, 32, 1, 0},
        {LayerKind::Relu, 0, 0, 1, 0},
        {LayerKind::MaxPool, 2, 0, 2, 0},
        {LayerKind::Conv2d, 3, 64, 1, 0},
        {LayerKind::Relu, 0, 0, 1, 0},
        {LayerKind::GlobalAvgPool, 0, 0, 1, 0},
        {LayerKind::Dense, 0, 0, 1, 128},
    };
    return s;
}

} // namespace tripletforge
