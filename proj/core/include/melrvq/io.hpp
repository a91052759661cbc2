#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "melrvq/dsp.hpp"
#include "melrvq/rvq.hpp"

namespace melrvq {

// Every binary artifact shares one envelope: a 4-byte magic, a u32 version,
// a little-endian payload, and a trailing CRC32 over everything before it.
// Readers verify length, checksum, magic, and version, in that order, so a
// single flipped byte anywhere in the file is caught.

class PayloadWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }
    void u16(uint16_t v);
    void u32(uint32_t v);
    void u64(uint64_t v);
    void f32(float v);
    void bytes(const void* data, size_t len);

    const std::vector<uint8_t>& data() const { return buf_; }

private:
    std::vector<uint8_t> buf_;
};

class PayloadReader {
public:
    PayloadReader(const uint8_t* data, size_t len) : p_(data), len_(len) {}
    explicit PayloadReader(const std::vector<uint8_t>& v) : p_(v.data()), len_(v.size()) {}

    uint8_t u8();
    uint16_t u16();
    uint32_t u32();
    uint64_t u64();
    float f32();
    bool at_end() const { return pos_ == len_; }
    void expect_end() const;  // FormatError on trailing bytes

private:
    void need(size_t n);
    const uint8_t* p_;
    size_t len_;
    size_t pos_ = 0;
};

void write_envelope(const std::string& path, const char magic[4], uint32_t version,
                    const std::vector<uint8_t>& payload);
std::vector<uint8_t> read_envelope(const std::string& path, const char magic[4],
                                   uint32_t expected_version);

// MELS v1: u32 T, u32 M, f32 frame_rate, T*M f32 row-major.
void save_mels(const std::string& path, const MelSpectrogram& spec);
MelSpectrogram load_mels(const std::string& path);

// MTOK v1: u32 T, u32 N, u32 K, T*N u16 row-major. K must fit in u16 range.
void save_tokens(const std::string& path, const TokenSequence& tokens);
TokenSequence load_tokens(const std::string& path);

// Tokens as text for inspection: header "frame,stage0,...", one row per frame.
void save_tokens_csv(const std::string& path, const TokenSequence& tokens);

// MRVQ v1: u32 N, u32 K, u32 code_dim, u32 input_dim, f32 alpha, f32 beta,
// u8 tag (low bits = source, high bit = frozen), input mean/std f32, then per
// stage the projection, decoder, and codebook matrices f32 row-major.
void save_rvq(const std::string& path, const MelRvq& rvq);
MelRvq load_rvq(const std::string& path);

}  // namespace melrvq
