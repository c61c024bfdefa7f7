#include "tripletforge/store.hpp"

#include <fstream>

namespace tripletforge {

std::uint64_t fnv1a64(const void* data, std::size_t size) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

void write_artifact(const std::string& path, const char magic[8], std::uint32_t version,
                    const std::string& payload) {
    ByteWriter header;
    header.bytes(magic, 7);
    header.u32(version);
    header.u64(fnv1a64(payload.data(), payload.size()));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(header.str().data(), static_cast<std::streamsize>(header.str().size()));
    f.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!f) throw IoError("short write: " + path);
}

std::string read_artifact(const std::string& path, const char magic[8],
                          std::uint32_t expected_version) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string raw((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (raw.size() < 19) throw TruncationError("artifact header is truncated: " + path);
    if (std::memcmp(raw.data(), magic, 7) != 0)
        throw UnknownMagicError("unexpected artifact magic in " + path);
    ByteReader header(raw.data() + 7, 12);
    const std::uint32_t version = header.u32();
    if (version != expected_version)
        throw UnknownVersionError("unsupported artifact version " + std::to_string(version) +
                                  " in " + path);
    const std::uint64_t want = header.u64();
    const std::string payload = raw.substr(19);
    if (fnv1a64(payload.data(), payload.size()) != want)
        throw ChecksumError("payload checksum mismatch in " + path);
    return payload;
}

void write_features(const std::string& path, const EnergySpectrogram& s) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(s.n_mels));
    w.u32(static_cast<std::uint32_t>(s.n_frames));
    w.f64(s.frame_hop_s);
    for (float c : s.cells) w.f32(c);
    write_artifact(path, kMagicFeatures, 1, w.str());
}

EnergySpectrogram read_features(const std::string& path) {
    const std::string payload = read_artifact(path, kMagicFeatures, 1);
    ByteReader r(payload.data(), payload.size());
    EnergySpectrogram s;
    s.n_mels = static_cast<int>(r.u32());
    s.n_frames = static_cast<int>(r.u32());
    s.frame_hop_s = r.f64();
    const std::size_t n = static_cast<std::size_t>(s.n_mels) * static_cast<std::size_t>(s.n_frames);
    s.cells.resize(n);
    for (auto& c : s.cells) c = r.f32();
    if (!r.exhausted()) throw TruncationError("trailing bytes in feature shard: " + path);
    return s;
}

void write_triplets(const std::string& path, const std::vector<TripletRecord>& triplets) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(triplets.size()));
    for (const auto& t : triplets) {
        w.u8(static_cast<std::uint8_t>(t.source));
        w.u64(t.transform_seed);
        for (const WindowRef* ref : {&t.anchor, &t.positive, &t.negative}) {
            w.u32(ref->recording);
            w.u32(ref->window);
        }
        for (float p : t.params) w.f32(p);
    }
    write_artifact(path, kMagicTriplets, 1, w.str());
}

std::vector<TripletRecord> read_triplets(const std::string& path) {
    const std::string payload = read_artifact(path, kMagicTriplets, 1);
    ByteReader r(payload.data(), payload.size());
    const std::uint32_t count = r.u32();
    std::vector<TripletRecord> out(count);
    for (auto& t : out) {
        t.source = static_cast<TripletSource>(r.u8());
        t.transform_seed = r.u64();
        for (WindowRef* ref : {&t.anchor, &t.positive, &t.negative}) {
            ref->recording = r.u32();
            ref->window = r.u32();
        }
        for (auto& p : t.params) p = r.f32();
    }
    if (!r.exhausted()) throw TruncationError("trailing bytes in triplet shard: " + path);
    return out;
}

namespace {

void put_tensor(ByteWriter& w, const Tensor& t) {
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) w.u32(static_cast<std::uint32_t>(d));
    for (float v : t.data) w.f32(v);
}

Tensor get_tensor(ByteReader& r) {
    const std::uint32_t rank = r.u32();
    std::vector<int> shape(rank);
    std::size_t n = 1;
    for (auto& d : shape) {
        d = static_cast<int>(r.u32());
        n *= static_cast<std::size_t>(d);
    }
    Tensor t = Tensor::zeros(shape);
    for (std::size_t i = 0; i < n; ++i) t.data[i] = r.f32();
    return t;
}

void put_model_spec(ByteWriter& w, const ModelSpec& spec) {
    w.u32(static_cast<std::uint32_t>(spec.input_channels));
    w.u32(static_cast<std::uint32_t>(spec.input_h));
    w.u32(static_cast<std::uint32_t>(spec.input_w));
    w.u32(static_cast<std::uint32_t>(spec.layers.size()));
    for (const auto& l : spec.layers) {
        w.u8(static_cast<std::uint8_t>(l.kind));
        w.i32(l.kernel);
        w.i32(l.channels);
        w.i32(l.stride);
        w.i32(l.units);
    }
}

ModelSpec get_model_spec(ByteReader& r) {
    ModelSpec spec;
    spec.input_channels = static_cast<int>(r.u32());
    spec.input_h = static_cast<int>(r.u32());
    spec.input_w = static_cast<int>(r.u32());
    const std::uint32_t n = r.u32();
    spec.layers.resize(n);
    for (auto& l : spec.layers) {
        l.kind = static_cast<LayerKind>(r.u8());
        l.kernel = r.i32();
        l.channels = r.i32();
        l.stride = r.i32();
        l.units = r.i32();
    }
    return spec;
}

} // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    ByteWriter w;
    put_model_spec(w, ckpt.spec);
    w.u32(static_cast<std::uint32_t>(ckpt.params.size()));
    for (const auto& p : ckpt.params) put_tensor(w, p);
    w.u8(ckpt.has_optimizer ? 1 : 0);
    if (ckpt.has_optimizer) {
        const auto& o = ckpt.optimizer;
        w.u64(static_cast<std::uint64_t>(o.step));
        w.f64(o.learning_rate);
        w.f64(o.beta1);
        w.f64(o.beta2);
        w.f64(o.epsilon);
        for (const auto& t : o.m) put_tensor(w, t);
        for (const auto& t : o.v) put_tensor(w, t);
    }
    write_artifact(path, kMagicCheckpoint, 1, w.str());
}

Checkpoint read_checkpoint(const std::string& path) {
    const std::string payload = read_artifact(path, kMagicCheckpoint, 1);
    ByteReader r(payload.data(), payload.size());
    Checkpoint ckpt;
    ckpt.spec = get_model_spec(r);
    const std::uint32_t n = r.u32();
    ckpt.params.reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) ckpt.params.push_back(get_tensor(r));
    ckpt.has_optimizer = r.u8() != 0;
    if (ckpt.has_optimizer) {
        auto& o = ckpt.optimizer;
        o.step = static_cast<long>(r.u64());
        o.learning_rate = r.f64();
        o.beta1 = r.f64();
        o.beta2 = r.f64();
        o.epsilon = r.f64();
        for (std::uint32_t i = 0; i < n; ++i) o.m.push_back(get_tensor(r));
        for (std::uint32_t i = 0; i < n; ++i) o.v.push_back(get_tensor(r));
    }
    if (!r.exhausted()) throw TruncationError("trailing bytes in checkpoint: " + path);
    return ckpt;
}

void write_embeddings(const std::string& path, const EmbeddingStore& store) {
    ByteWriter w;
    w.u32(store.dim);
    w.u64(store.ids.size());
    for (std::size_t i = 0; i < store.ids.size(); ++i) {
        w.u64(store.ids[i]);
        const float* row = store.row(i);
        for (std::uint32_t d = 0; d < store.dim; ++d) w.f32(row[d]);
    }
    write_artifact(path, kMagicEmbeddings, 1, w.str());
}

EmbeddingStore read_embeddings(const std::string& path) {
    const std::string payload = read_artifact(path, kMagicEmbeddings, 1);
    ByteReader r(payload.data(), payload.size());
    EmbeddingStore store;
    store.dim = r.u32();
    const std::uint64_t count = r.u64();
    store.ids.resize(count);
    store.data.resize(count * store.dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        store.ids[i] = r.u64();
        for (std::uint32_t d = 0; d < store.dim; ++d) store.data[i * store.dim + d] = r.f32();
    }
    if (!r.exhausted()) throw TruncationError("trailing bytes in embedding store: " + path);
    return store;
}

} // namespace tripletforge
