#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace melrvq {

// CRC-32 (IEEE 802.3, reflected polynomial 0xEDB88320). Used as the trailing
// integrity word of every binary artifact (MELS/MRVQ/MTOK/MTOY).
uint32_t crc32(const void* data, size_t len, uint32_t seed = 0);

// FNV-1a 64-bit. Used for manifest content hashes and seed-stream derivation.
uint64_t fnv1a64(const void* data, size_t len);
uint64_t fnv1a64(std::string_view s);

// Hash of an entire file's bytes. Throws IoError if the file cannot be read.
uint64_t hash_file(const std::string& path);

std::string to_hex(uint64_t value);

}  // namespace melrvq
