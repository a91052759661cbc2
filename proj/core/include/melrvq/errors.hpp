#pragma once

#include <stdexcept>
#include <string>

namespace melrvq {

// Base class for all library errors. The CLI maps subclasses to exit codes:
// usage errors -> 1, data/format errors -> 2, numerical divergence -> 3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or corrupt on-disk data: bad magic, version mismatch,
// truncation, checksum failure, unparsable WAV headers.
class FormatError : public Error {
public:
    using Error::Error;
};

// Structurally valid input with an encoding we do not decode (e.g. ADPCM WAV).
class UnsupportedCodecError : public Error {
public:
    using Error::Error;
};

// Dimension disagreement between an input and a model or config.
class ShapeError : public Error {
public:
    using Error::Error;
};

// Semantically invalid request: empty batch, mask with no masked frames,
// contrastive batch smaller than two, training a frozen quantizer.
class DomainError : public Error {
public:
    using Error::Error;
};

// Filesystem-level failure (missing file, short read/write).
class IoError : public Error {
public:
    using Error::Error;
};

// Non-finite loss or gradient during training. Carries the step index.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& msg, long step)
        : Error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}
    long step() const { return step_; }

private:
    long step_;
};

}  // namespace melrvq
