#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace clab {

// Decoded IDX tensor of unsigned bytes (the MNIST container format).
struct IdxTensor {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> data;
};

// Parses the big-endian IDX format: magic 0x0000'08'NN (u8 payload, NN
// dimensions), NN u32 dimension sizes, then the raw payload. Malformed input
// raises std::runtime_error naming the exact byte offset.
IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes);

IdxTensor load_idx(const std::string& path);

}  // namespace clab
