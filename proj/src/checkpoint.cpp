#include "fedsim/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <vector>

namespace fedsim {

namespace {

constexpr char kMagic[8] = {'F', 'L', 'G', 'A', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
    return v;
}

uint64_t get_u64(const unsigned char* p) {
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
    return v;
}

}  // namespace

void write_checkpoint(const ParamVector& params, const std::string& path) {
    std::string out(kMagic, sizeof(kMagic));
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (double v : params) put_u64(out, std::bit_cast<uint64_t>(v));

    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) throw CheckpointError(CheckpointError::Kind::OpenFailed, "checkpoint: cannot open '" + path + "'");
    file.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!file) throw CheckpointError(CheckpointError::Kind::OpenFailed, "checkpoint: write to '" + path + "' failed");
}

ParamVector read_checkpoint(const std::string& path, int expected_dim) {
    std::ifstream file(path, std::ios::binary);
    if (!file) throw CheckpointError(CheckpointError::Kind::OpenFailed, "checkpoint: cannot open '" + path + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());

    if (bytes.size() < 12)
        throw CheckpointError(CheckpointError::Kind::Truncated,
                              "checkpoint: '" + path + "' holds " + std::to_string(bytes.size()) +
                                  " bytes, header needs 12");
    for (size_t i = 0; i < sizeof(kMagic); ++i)
        if (static_cast<char>(bytes[i]) != kMagic[i])
            throw CheckpointError(CheckpointError::Kind::BadMagic, "checkpoint: '" + path + "' has a bad magic");

    const uint32_t dim = get_u32(bytes.data() + 8);
    const size_t expected_bytes = 12 + static_cast<size_t>(dim) * 8;
    if (bytes.size() != expected_bytes)
        throw CheckpointError(CheckpointError::Kind::Truncated,
                              "checkpoint: '" + path + "' holds " + std::to_string(bytes.size()) +
                                  " bytes, dim " + std::to_string(dim) + " needs " +
                                  std::to_string(expected_bytes));
    if (expected_dim >= 0 && dim != static_cast<uint32_t>(expected_dim))
        throw CheckpointError(CheckpointError::Kind::DimMismatch,
                              "checkpoint: '" + path + "' has dim " + std::to_string(dim) + ", expected " +
                                  std::to_string(expected_dim));

    ParamVector params(dim);
    for (uint32_t i = 0; i < dim; ++i) params[i] = std::bit_cast<double>(get_u64(bytes.data() + 12 + 8 * i));
    return params;
}

}  // namespace fedsim
