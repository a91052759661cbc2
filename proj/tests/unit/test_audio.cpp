#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "melrvq/audio.hpp"
#include "melrvq/errors.hpp"
#include "melrvq/fft.hpp"
#include "melrvq/rng.hpp"
#include "melrvq/synth.hpp"
#include "test_util.hpp"

using namespace melrvq;
using melrvq::testutil::TempDir;

namespace {

// Minimal stereo PCM16 writer for load tests (save_wav only writes mono).
void write_stereo_wav(const std::string& path, const std::vector<int16_t>& left,
                      const std::vector<int16_t>& right, uint32_t rate) {
    REQUIRE(left.size() == right.size());
    std::ofstream f(path, std::ios::binary);
    auto u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
    auto u16 = [&](uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
    const uint32_t data_bytes = static_cast<uint32_t>(left.size()) * 4;
    f.write("RIFF", 4);
    u32(36 + data_bytes);
    f.write("WAVE", 4);
    f.write("fmt ", 4);
    u32(16);
    u16(1);
    u16(2);
    u32(rate);
    u32(rate * 4);
    u16(4);
    u16(16);
    f.write("data", 4);
    u32(data_bytes);
    for (size_t i = 0; i < left.size(); ++i) {
        u16(static_cast<uint16_t>(left[i]));
        u16(static_cast<uint16_t>(right[i]));
    }
}

}  // namespace

TEST_CASE("one second of silence loads as 24000 zero samples") {
    TempDir tmp("wav-silence");
    save_wav(tmp.file("silence.wav"), synth_silence(1.0, 24000));
    const AudioClip clip = load_wav(tmp.file("silence.wav"));
    CHECK(clip.sample_rate_hz == 24000);
    REQUIRE(clip.samples.size() == 24000);
    for (float s : clip.samples) CHECK(s == 0.0f);
}

TEST_CASE("symmetric stereo averages to zero mono") {
    TempDir tmp("wav-stereo");
    std::vector<int16_t> left(1000, 16384), right(1000, -16384);
    write_stereo_wav(tmp.file("sym.wav"), left, right, 24000);
    const AudioClip clip = load_wav(tmp.file("sym.wav"));
    REQUIRE(clip.samples.size() == 1000);
    for (float s : clip.samples) CHECK(s == 0.0f);
}

TEST_CASE("440 Hz sine fixture survives the wav round trip") {
    TempDir tmp("wav-sine");
    save_wav(tmp.file("sine.wav"), synth_sine(440.0, 2.0, 24000, 0.8));
    const AudioClip clip = load_wav(tmp.file("sine.wav"));
    CHECK(clip.samples.size() == 48000);
    float peak = 0.0f;
    for (float s : clip.samples) peak = std::max(peak, std::abs(s));
    CHECK(std::abs(peak - 0.8f) < 1e-3f);
}

TEST_CASE("malformed and unsupported wav files are rejected") {
    TempDir tmp("wav-bad");
    {
        std::ofstream f(tmp.file("garbage.wav"), std::ios::binary);
        f << "definitely not RIFF data";
    }
    CHECK_THROWS_AS(load_wav(tmp.file("garbage.wav")), FormatError);

    // Valid RIFF envelope, 8-bit PCM payload.
    {
        std::ofstream f(tmp.file("pcm8.wav"), std::ios::binary);
        auto u32 = [&](uint32_t v) { f.write(reinterpret_cast<const char*>(&v), 4); };
        auto u16 = [&](uint16_t v) { f.write(reinterpret_cast<const char*>(&v), 2); };
        f.write("RIFF", 4);
        u32(36 + 4);
        f.write("WAVE", 4);
        f.write("fmt ", 4);
        u32(16);
        u16(1);
        u16(1);
        u32(24000);
        u32(24000);
        u16(1);
        u16(8);
        f.write("data", 4);
        u32(4);
        u32(0x80808080u);
    }
    CHECK_THROWS_AS(load_wav(tmp.file("pcm8.wav")), UnsupportedCodecError);

    CHECK_THROWS_AS(load_wav(tmp.file("missing.wav")), IoError);
}

TEST_CASE("truncated riff header is a format error") {
    TempDir tmp("wav-trunc");
    {
        std::ofstream f(tmp.file("short.wav"), std::ios::binary);
        f << "RIFF";
    }
    CHECK_THROWS_AS(load_wav(tmp.file("short.wav")), FormatError);
}

TEST_CASE("resample at the same rate is the identity") {
    const AudioClip clip = synth_note_clip(3, {.seconds = 1.0});
    const AudioClip out = resample(clip, clip.sample_rate_hz);
    REQUIRE(out.samples.size() == clip.samples.size());
    CHECK(std::memcmp(out.samples.data(), clip.samples.data(),
                      clip.samples.size() * sizeof(float)) == 0);
}

TEST_CASE("resampling preserves a constant signal") {
    AudioClip clip;
    clip.sample_rate_hz = 48000;
    clip.samples.assign(48000, 0.3f);
    const AudioClip out = resample(clip, 24000);
    CHECK(std::abs(static_cast<long>(out.samples.size()) - 24000L) <= 1);
    for (float s : out.samples) CHECK(std::abs(s - 0.3f) < 1e-3f);
}

TEST_CASE("downsampled sine keeps its dominant frequency") {
    const AudioClip hi = synth_sine(440.0, 2.0, 48000, 0.7);
    const AudioClip lo = resample(hi, 24000);
    CHECK(std::abs(static_cast<long>(lo.samples.size()) - 48000L) <= 1);
    const double peak = dominant_frequency_hz(lo.samples, 24000.0);
    CHECK(std::abs(peak - 440.0) <= 2.0);
}

TEST_CASE("resampled length follows round(len * ratio) within one sample") {
    Rng rng(42);
    for (int trial = 0; trial < 20; ++trial) {
        AudioClip clip;
        clip.sample_rate_hz = 8000 + static_cast<int>(rng.uniform_index(40000));
        clip.samples.assign(100 + rng.uniform_index(5000), 0.1f);
        const int target = 8000 + static_cast<int>(rng.uniform_index(40000));
        const AudioClip out = resample(clip, target);
        const double expected =
            std::round(static_cast<double>(clip.samples.size()) * target / clip.sample_rate_hz);
        CHECK(std::abs(static_cast<double>(out.samples.size()) - expected) <= 1.0);
    }
}

TEST_CASE("resample rejects non-positive rates") {
    AudioClip clip;
    clip.sample_rate_hz = 24000;
    clip.samples.assign(100, 0.0f);
    CHECK_THROWS_AS(resample(clip, 0), DomainError);
}
