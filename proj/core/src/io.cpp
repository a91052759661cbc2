#include "melrvq/io.hpp"

#include <cstring>
#include <fstream>

#include "melrvq/errors.hpp"
#include "melrvq/hash.hpp"

namespace melrvq {

void PayloadWriter::u16(uint16_t v) {
    buf_.push_back(static_cast<uint8_t>(v));
    buf_.push_back(static_cast<uint8_t>(v >> 8));
}

void PayloadWriter::u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void PayloadWriter::u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void PayloadWriter::f32(float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
}

void PayloadWriter::bytes(const void* data, size_t len) {
    const auto* p = static_cast<const uint8_t*>(data);
    buf_.insert(buf_.end(), p, p + len);
}

void PayloadReader::need(size_t n) {
    if (pos_ + n > len_) throw FormatError("payload: truncated");
}

uint8_t PayloadReader::u8() {
    need(1);
    return p_[pos_++];
}

uint16_t PayloadReader::u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p_[pos_] | (p_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
}

uint32_t PayloadReader::u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 4;
    return v;
}

uint64_t PayloadReader::u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p_[pos_ + static_cast<size_t>(i)]) << (8 * i);
    pos_ += 8;
    return v;
}

float PayloadReader::f32() {
    uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void PayloadReader::expect_end() const {
    if (pos_ != len_) throw FormatError("payload: trailing bytes");
}

void write_envelope(const std::string& path, const char magic[4], uint32_t version,
                    const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> file;
    file.reserve(payload.size() + 12);
    file.insert(file.end(), magic, magic + 4);
    for (int i = 0; i < 4; ++i) file.push_back(static_cast<uint8_t>(version >> (8 * i)));
    file.insert(file.end(), payload.begin(), payload.end());
    const uint32_t crc = crc32(file.data(), file.size());
    for (int i = 0; i < 4; ++i) file.push_back(static_cast<uint8_t>(crc >> (8 * i)));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot create: " + path);
    f.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
    if (!f) throw IoError("short write: " + path);
}

std::vector<uint8_t> read_envelope(const std::string& path, const char magic[4],
                                   uint32_t expected_version) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<uint8_t> file((std::istreambuf_iterator<char>(f)),
                              std::istreambuf_iterator<char>());
    if (file.size() < 12) throw FormatError(path + ": truncated file");

    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) {
        stored |= static_cast<uint32_t>(file[file.size() - 4 + static_cast<size_t>(i)]) << (8 * i);
    }
    const uint32_t actual = crc32(file.data(), file.size() - 4);
    if (stored != actual) throw FormatError(path + ": checksum mismatch");

    if (std::memcmp(file.data(), magic, 4) != 0)
        throw FormatError(path + ": bad magic (expected " + std::string(magic, 4) + ")");
    uint32_t version = 0;
    for (int i = 0; i < 4; ++i) version |= static_cast<uint32_t>(file[4 + static_cast<size_t>(i)]) << (8 * i);
    if (version != expected_version)
        throw FormatError(path + ": unsupported version " + std::to_string(version));

    return std::vector<uint8_t>(file.begin() + 8, file.end() - 4);
}

namespace {

constexpr uint32_t kVersion = 1;

void write_matrix_f32(PayloadWriter& w, const Eigen::MatrixXd& m) {
    for (long i = 0; i < m.rows(); ++i) {
        for (long j = 0; j < m.cols(); ++j) w.f32(static_cast<float>(m(i, j)));
    }
}

Eigen::MatrixXd read_matrix_f32(PayloadReader& r, long rows, long cols) {
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        for (long j = 0; j < cols; ++j) m(i, j) = static_cast<double>(r.f32());
    }
    return m;
}

void write_vector_f32(PayloadWriter& w, const Eigen::VectorXd& v) {
    for (long i = 0; i < v.size(); ++i) w.f32(static_cast<float>(v(i)));
}

Eigen::VectorXd read_vector_f32(PayloadReader& r, long n) {
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i) v(i) = static_cast<double>(r.f32());
    return v;
}

constexpr uint8_t kFrozenBit = 0x80;

}  // namespace

void save_mels(const std::string& path, const MelSpectrogram& spec) {
    PayloadWriter w;
    w.u32(static_cast<uint32_t>(spec.frames.rows()));
    w.u32(static_cast<uint32_t>(spec.frames.cols()));
    w.f32(spec.frame_rate_hz);
    for (long t = 0; t < spec.frames.rows(); ++t) {
        for (long m = 0; m < spec.frames.cols(); ++m) w.f32(spec.frames(t, m));
    }
    write_envelope(path, "MELS", kVersion, w.data());
}

MelSpectrogram load_mels(const std::string& path) {
    const auto payload = read_envelope(path, "MELS", kVersion);
    PayloadReader r(payload);
    const uint32_t T = r.u32();
    const uint32_t M = r.u32();
    MelSpectrogram spec;
    spec.frame_rate_hz = r.f32();
    spec.frames.resize(T, M);
    for (uint32_t t = 0; t < T; ++t) {
        for (uint32_t m = 0; m < M; ++m) spec.frames(t, m) = r.f32();
    }
    r.expect_end();
    if (!spec.frames.allFinite()) throw FormatError(path + ": non-finite mel entries");
    return spec;
}

void save_tokens(const std::string& path, const TokenSequence& tokens) {
    if (tokens.codebook_size > 65536)
        throw DomainError("save_tokens: codebook size exceeds u16 token range");
    PayloadWriter w;
    w.u32(static_cast<uint32_t>(tokens.tokens.rows()));
    w.u32(static_cast<uint32_t>(tokens.tokens.cols()));
    w.u32(static_cast<uint32_t>(tokens.codebook_size));
    for (long t = 0; t < tokens.tokens.rows(); ++t) {
        for (long n = 0; n < tokens.tokens.cols(); ++n) {
            const int tok = tokens.tokens(t, n);
            if (tok < 0 || tok >= tokens.codebook_size)
                throw DomainError("save_tokens: token out of range");
            w.u16(static_cast<uint16_t>(tok));
        }
    }
    write_envelope(path, "MTOK", kVersion, w.data());
}

TokenSequence load_tokens(const std::string& path) {
    const auto payload = read_envelope(path, "MTOK", kVersion);
    PayloadReader r(payload);
    const uint32_t T = r.u32();
    const uint32_t N = r.u32();
    TokenSequence out;
    out.codebook_size = static_cast<int>(r.u32());
    out.num_stages = static_cast<int>(N);
    out.tokens.resize(T, N);
    for (uint32_t t = 0; t < T; ++t) {
        for (uint32_t n = 0; n < N; ++n) {
            const uint16_t tok = r.u16();
            if (tok >= out.codebook_size)
                throw FormatError(path + ": token out of range");
            out.tokens(t, n) = tok;
        }
    }
    r.expect_end();
    return out;
}

void save_tokens_csv(const std::string& path, const TokenSequence& tokens) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cannot create: " + path);
    f << "frame";
    for (long n = 0; n < tokens.tokens.cols(); ++n) f << ",stage" << n;
    f << "\n";
    for (long t = 0; t < tokens.tokens.rows(); ++t) {
        f << t;
        for (long n = 0; n < tokens.tokens.cols(); ++n) f << "," << tokens.tokens(t, n);
        f << "\n";
    }
    if (!f) throw IoError("short write: " + path);
}

void save_rvq(const std::string& path, const MelRvq& rvq) {
    rvq.validate();
    PayloadWriter w;
    w.u32(static_cast<uint32_t>(rvq.num_stages()));
    w.u32(static_cast<uint32_t>(rvq.codebook_size()));
    w.u32(static_cast<uint32_t>(rvq.code_dim()));
    w.u32(static_cast<uint32_t>(rvq.input_dim()));
    w.f32(static_cast<float>(rvq.alpha));
    w.f32(static_cast<float>(rvq.beta));
    uint8_t tag = static_cast<uint8_t>(rvq.source);
    if (rvq.frozen_random) tag |= kFrozenBit;
    w.u8(tag);
    write_vector_f32(w, rvq.input_stats.mean);
    write_vector_f32(w, rvq.input_stats.std);
    for (const auto& s : rvq.stages) {
        write_matrix_f32(w, s.projection);
        write_matrix_f32(w, s.decoder);
        write_matrix_f32(w, s.codebook);
    }
    write_envelope(path, "MRVQ", kVersion, w.data());
}

MelRvq load_rvq(const std::string& path) {
    const auto payload = read_envelope(path, "MRVQ", kVersion);
    PayloadReader r(payload);
    const uint32_t N = r.u32();
    const uint32_t K = r.u32();
    const uint32_t d = r.u32();
    const uint32_t M = r.u32();
    MelRvq rvq;
    rvq.alpha = static_cast<double>(r.f32());
    rvq.beta = static_cast<double>(r.f32());
    const uint8_t tag = r.u8();
    rvq.frozen_random = (tag & kFrozenBit) != 0;
    const uint8_t source = tag & 0x0F;
    if (source > 1) throw FormatError(path + ": unknown source tag");
    rvq.source = static_cast<RvqSource>(source);
    rvq.input_stats.mean = read_vector_f32(r, M);
    rvq.input_stats.std = read_vector_f32(r, M);
    for (uint32_t n = 0; n < N; ++n) {
        StageParams s;
        s.projection = read_matrix_f32(r, d, M);
        s.decoder = read_matrix_f32(r, M, d);
        s.codebook = read_matrix_f32(r, K, d);
        rvq.stages.push_back(std::move(s));
    }
    r.expect_end();
    rvq.validate();
    return rvq;
}

}  // namespace melrvq
