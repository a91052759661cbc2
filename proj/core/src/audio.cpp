#include "melrvq/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "melrvq/errors.hpp"

namespace melrvq {

namespace {

constexpr uint16_t kFormatPcm = 1;
constexpr uint16_t kFormatFloat = 3;
constexpr uint16_t kFormatExtensible = 0xFFFE;

struct Reader {
    const uint8_t* p;
    size_t len;
    size_t pos = 0;

    bool can_read(size_t n) const { return pos + n <= len; }

    uint32_t u32() {
        if (!can_read(4)) throw FormatError("wav: truncated header");
        uint32_t v = static_cast<uint32_t>(p[pos]) | (static_cast<uint32_t>(p[pos + 1]) << 8) |
                     (static_cast<uint32_t>(p[pos + 2]) << 16) |
                     (static_cast<uint32_t>(p[pos + 3]) << 24);
        pos += 4;
        return v;
    }

    uint16_t u16() {
        if (!can_read(2)) throw FormatError("wav: truncated header");
        uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }

    void tag(char out[4]) {
        if (!can_read(4)) throw FormatError("wav: truncated header");
        std::memcpy(out, p + pos, 4);
        pos += 4;
    }

    void skip(size_t n) {
        if (!can_read(n)) throw FormatError("wav: truncated chunk");
        pos += n;
    }
};

void put_u32(std::ofstream& f, uint32_t v) {
    uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                    static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    f.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16(std::ofstream& f, uint16_t v) {
    uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    f.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

AudioClip load_wav(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open wav file: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
    if (bytes.size() < 12) throw FormatError("wav: file too small: " + path);

    Reader r{bytes.data(), bytes.size()};
    char tag[4];
    r.tag(tag);
    if (std::memcmp(tag, "RIFF", 4) != 0) throw FormatError("wav: missing RIFF tag");
    r.u32();  // declared RIFF size; trusted only up to the actual file length
    r.tag(tag);
    if (std::memcmp(tag, "WAVE", 4) != 0) throw FormatError("wav: missing WAVE tag");

    uint16_t format = 0, channels = 0, bits = 0;
    uint32_t rate = 0;
    bool have_fmt = false;
    const uint8_t* data = nullptr;
    size_t data_len = 0;

    while (r.can_read(8)) {
        r.tag(tag);
        uint32_t chunk_len = r.u32();
        if (!r.can_read(chunk_len)) throw FormatError("wav: chunk overruns file");
        if (std::memcmp(tag, "fmt ", 4) == 0) {
            if (chunk_len < 16) throw FormatError("wav: fmt chunk too small");
            size_t chunk_start = r.pos;
            format = r.u16();
            channels = r.u16();
            rate = r.u32();
            r.u32();  // byte rate
            r.u16();  // block align
            bits = r.u16();
            if (format == kFormatExtensible && chunk_len >= 40) {
                r.u16();            // cbSize
                r.u16();            // valid bits
                r.u32();            // channel mask
                format = r.u16();   // first two bytes of the SubFormat GUID
            }
            r.pos = chunk_start + chunk_len;
            have_fmt = true;
        } else if (std::memcmp(tag, "data", 4) == 0) {
            data = bytes.data() + r.pos;
            data_len = chunk_len;
            r.skip(chunk_len);
        } else {
            r.skip(chunk_len);
        }
        if (chunk_len & 1) {
            if (r.can_read(1)) r.skip(1);  // chunk payloads are word-aligned
        }
    }

    if (!have_fmt) throw FormatError("wav: missing fmt chunk");
    if (!data) throw FormatError("wav: missing data chunk");
    if (channels == 0 || channels > 2)
        throw UnsupportedCodecError("wav: unsupported channel count " + std::to_string(channels));
    if (rate == 0) throw FormatError("wav: zero sample rate");

    const bool pcm16 = (format == kFormatPcm && bits == 16);
    const bool f32 = (format == kFormatFloat && bits == 32);
    if (!pcm16 && !f32)
        throw UnsupportedCodecError("wav: only 16-bit PCM and 32-bit float are supported (format " +
                                    std::to_string(format) + ", " + std::to_string(bits) + " bits)");

    const size_t bytes_per_sample = pcm16 ? 2 : 4;
    const size_t frame_bytes = bytes_per_sample * channels;
    const size_t frames = data_len / frame_bytes;

    AudioClip clip;
    clip.sample_rate_hz = static_cast<int>(rate);
    clip.samples.resize(frames);

    for (size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (uint16_t c = 0; c < channels; ++c) {
            const uint8_t* s = data + i * frame_bytes + c * bytes_per_sample;
            if (pcm16) {
                int16_t v = static_cast<int16_t>(s[0] | (s[1] << 8));
                acc += static_cast<double>(v) / 32768.0;
            } else {
                uint32_t u = static_cast<uint32_t>(s[0]) | (static_cast<uint32_t>(s[1]) << 8) |
                             (static_cast<uint32_t>(s[2]) << 16) |
                             (static_cast<uint32_t>(s[3]) << 24);
                float v;
                std::memcpy(&v, &u, 4);
                acc += static_cast<double>(v);
            }
        }
        clip.samples[i] = static_cast<float>(acc / channels);
    }
    return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
    if (clip.sample_rate_hz <= 0) throw DomainError("save_wav: invalid sample rate");
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot create wav file: " + path);

    const uint32_t n = static_cast<uint32_t>(clip.samples.size());
    const uint32_t data_bytes = n * 2;
    f.write("RIFF", 4);
    put_u32(f, 36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    put_u32(f, 16);
    put_u16(f, kFormatPcm);
    put_u16(f, 1);  // mono
    put_u32(f, static_cast<uint32_t>(clip.sample_rate_hz));
    put_u32(f, static_cast<uint32_t>(clip.sample_rate_hz) * 2);
    put_u16(f, 2);
    put_u16(f, 16);
    f.write("data", 4);
    put_u32(f, data_bytes);
    for (uint32_t i = 0; i < n; ++i) {
        double v = std::clamp(static_cast<double>(clip.samples[i]), -1.0, 1.0);
        auto q = static_cast<int32_t>(std::lrint(v * 32767.0));
        q = std::clamp(q, -32768, 32767);
        put_u16(f, static_cast<uint16_t>(static_cast<int16_t>(q)));
    }
    if (!f) throw IoError("short write: " + path);
}

AudioClip resample(const AudioClip& clip, int target_hz) {
    if (target_hz <= 0) throw DomainError("resample: target rate must be positive");
    if (clip.sample_rate_hz <= 0) throw DomainError("resample: source rate must be positive");
    if (target_hz == clip.sample_rate_hz) return clip;

    const double ratio = static_cast<double>(target_hz) / clip.sample_rate_hz;
    const size_t out_len =
        static_cast<size_t>(std::llround(static_cast<double>(clip.samples.size()) * ratio));

    AudioClip out;
    out.sample_rate_hz = target_hz;
    out.samples.resize(out_len);
    if (clip.samples.empty()) return out;

    constexpr int kTaps = 32;
    // Cutoff at 95% of the narrower Nyquist to leave room for the window's
    // transition band.
    const double cutoff = 0.95 * std::min(1.0, ratio);
    const long n_in = static_cast<long>(clip.samples.size());

    for (size_t i = 0; i < out_len; ++i) {
        const double t = static_cast<double>(i) / ratio;  // position in source samples
        const long k0 = static_cast<long>(std::floor(t)) - kTaps + 1;
        const long k1 = static_cast<long>(std::floor(t)) + kTaps;
        double acc = 0.0;
        double norm = 0.0;
        for (long k = std::max(0L, k0); k <= std::min(n_in - 1, k1); ++k) {
            const double x = static_cast<double>(k) - t;
            const double sx = cutoff * x;
            const double sinc = (std::abs(sx) < 1e-12) ? 1.0 : std::sin(M_PI * sx) / (M_PI * sx);
            const double w = 0.5 + 0.5 * std::cos(M_PI * x / (kTaps + 1));
            const double h = cutoff * sinc * w;
            acc += h * clip.samples[static_cast<size_t>(k)];
            norm += h;
        }
        out.samples[i] = norm != 0.0 ? static_cast<float>(acc / norm) : 0.0f;
    }
    return out;
}

}  // namespace melrvq
