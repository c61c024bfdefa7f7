#include "tripletforge/frontend.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "tripletforge/errors.hpp"

namespace tripletforge {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t get_u16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

} // namespace

void write_wav(const std::string& path, const Waveform& w) {
    const std::uint32_t n = static_cast<std::uint32_t>(w.samples.size());
    const std::uint32_t data_bytes = n * 2;

    std::string buf;
    buf.reserve(44 + data_bytes);
    buf.append("RIFF");
    put_u32(buf, 36 + data_bytes);
    buf.append("WAVE");
    buf.append("fmt ");
    put_u32(buf, 16);
    put_u16(buf, 1); // PCM
    put_u16(buf, 1); // mono
    put_u32(buf, static_cast<std::uint32_t>(w.sample_rate));
    put_u32(buf, static_cast<std::uint32_t>(w.sample_rate) * 2);
    put_u16(buf, 2);  // block align
    put_u16(buf, 16); // bits per sample
    buf.append("data");
    put_u32(buf, data_bytes);
    for (float s : w.samples) {
        const float clamped = std::clamp(s, -1.0f, 1.0f);
        const auto q = static_cast<std::int16_t>(std::lrintf(clamped * 32767.0f));
        put_u16(buf, static_cast<std::uint16_t>(q));
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError("short write: " + path);
}

Waveform read_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<unsigned char> raw((std::istreambuf_iterator<char>(f)),
                                   std::istreambuf_iterator<char>());
    if (raw.size() < 44) throw TruncationError("WAV too short: " + path);
    if (std::memcmp(raw.data(), "RIFF", 4) != 0 || std::memcmp(raw.data() + 8, "WAVE", 4) != 0)
        throw UnknownMagicError("not a RIFF/WAVE file: " + path);

    Waveform out;
    std::uint16_t channels = 0, bits = 0;
    bool have_fmt = false;
    std::size_t pos = 12;
    while (pos + 8 <= raw.size()) {
        const char* tag = reinterpret_cast<const char*>(raw.data() + pos);
        const std::uint32_t size = get_u32(raw.data() + pos + 4);
        const std::size_t body = pos + 8;
        if (body + size > raw.size()) throw TruncationError("truncated WAV chunk: " + path);
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (size < 16) throw TruncationError("short fmt chunk: " + path);
            const std::uint16_t format = get_u16(raw.data() + body);
            channels = get_u16(raw.data() + body + 2);
            out.sample_rate = static_cast<int>(get_u32(raw.data() + body + 4));
            bits = get_u16(raw.data() + body + 14);
            if (format != 1) throw IoError("only PCM WAV supported: " + path);
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            if (!have_fmt) throw IoError("data chunk before fmt: " + path);
            if (channels != 1 || bits != 16)
                throw IoError("expected 16-bit mono PCM: " + path);
            const std::size_t n = size / 2;
            out.samples.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                const auto v = static_cast<std::int16_t>(get_u16(raw.data() + body + 2 * i));
                out.samples[i] = static_cast<float>(v) / 32767.0f;
            }
            return out;
        }
        pos = body + size + (size & 1);
    }
    throw TruncationError("WAV has no data chunk: " + path);
}

Waveform resample_linear(const Waveform& w, int target_rate) {
    if (target_rate <= 0) throw ConfigError("target sample rate must be positive");
    if (w.sample_rate == target_rate || w.samples.empty()) {
        Waveform out = w;
        out.sample_rate = target_rate;
        return out;
    }
    const double ratio = static_cast<double>(w.sample_rate) / target_rate;
    const auto n_out = static_cast<std::size_t>(
        std::floor(static_cast<double>(w.samples.size() - 1) / ratio)) + 1;
    Waveform out;
    out.sample_rate = target_rate;
    out.samples.resize(n_out);
    for (std::size_t i = 0; i < n_out; ++i) {
        const double src = i * ratio;
        const auto lo = static_cast<std::size_t>(src);
        const std::size_t hi = std::min(lo + 1, w.samples.size() - 1);
        const double frac = src - static_cast<double>(lo);
        out.samples[i] = static_cast<float>((1.0 - frac) * w.samples[lo] + frac * w.samples[hi]);
    }
    return out;
}

} // namespace tripletforge
