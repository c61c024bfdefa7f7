#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "tripletforge/errors.hpp"
#include "tripletforge/frontend.hpp"
#include "tripletforge/nn.hpp"
#include "tripletforge/sampler.hpp"

namespace tripletforge {

// Little-endian payload builder / parser shared by all binary artifacts.
class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void bytes(const void* p, std::size_t n) {
        buf_.append(static_cast<const char*>(p), n);
    }
    const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    ByteReader(const char* data, std::size_t size) : data_(data), size_(size) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(take(1)[0]); }
    std::uint32_t u32() {
        const char* p = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        const char* p = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[i])) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    const char* take(std::size_t n) {
        if (pos_ + n > size_) throw TruncationError("artifact payload is truncated");
        const char* p = data_ + pos_;
        pos_ += n;
        return p;
    }
    bool exhausted() const { return pos_ == size_; }

private:
    const char* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

std::uint64_t fnv1a64(const void* data, std::size_t size);

// Framing: 7-byte magic, u32 version, u64 FNV-1a checksum of the payload,
// then the payload. The checksum covers the payload only.
void write_artifact(const std::string& path, const char magic[8], std::uint32_t version,
                    const std::string& payload);
std::string read_artifact(const std::string& path, const char magic[8],
                          std::uint32_t expected_version);

// Artifact kinds.
inline constexpr char kMagicFeatures[8] = "TFSPEC1";
inline constexpr char kMagicTriplets[8] = "TFTRIP1";
inline constexpr char kMagicCheckpoint[8] = "TFCKPT1";
inline constexpr char kMagicEmbeddings[8] = "TFEMB1\0";

void write_features(const std::string& path, const EnergySpectrogram& s);
EnergySpectrogram read_features(const std::string& path);

void write_triplets(const std::string& path, const std::vector<TripletRecord>& triplets);
std::vector<TripletRecord> read_triplets(const std::string& path);

struct Checkpoint {
    ModelSpec spec;
    std::vector<Tensor> params;
    bool has_optimizer = false;
    AdamState optimizer;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

struct EmbeddingStore {
    std::uint32_t dim = 0;
    std::vector<std::uint64_t> ids;
    std::vector<float> data; // ids.size() * dim, row-major

    const float* row(std::size_t i) const { return &data[i * dim]; }
};

void write_embeddings(const std::string& path, const EmbeddingStore& store);
EmbeddingStore read_embeddings(const std::string& path);

} // namespace tripletforge
