#pragma once

#include <stdexcept>
#include <string>

#include "fedsim/matrix.hpp"

namespace fedsim {

struct CheckpointError : std::runtime_error {
    enum class Kind { OpenFailed, BadMagic, Truncated, DimMismatch };
    Kind kind;
    CheckpointError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

// Binary layout: 8-byte magic "FLGACKPT", uint32 little-endian dimension,
// then dim doubles as little-endian IEEE-754 bit patterns. Round trips are
// bit-exact; an empty vector is a valid 12-byte file.
void write_checkpoint(const ParamVector& params, const std::string& path);

// expected_dim >= 0 enforces the caller's dimension (DimMismatch otherwise).
ParamVector read_checkpoint(const std::string& path, int expected_dim = -1);

}  // namespace fedsim
