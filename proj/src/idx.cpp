#include "clab/idx.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace clab {

namespace {

std::uint32_t read_u32_be(const std::vector<std::uint8_t>& b, std::size_t off) {
    if (off + 4 > b.size())
        throw std::runtime_error("idx: truncated at byte offset " + std::to_string(b.size()) +
                                 " while reading header word at offset " + std::to_string(off));
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) |
           static_cast<std::uint32_t>(b[off + 3]);
}

}  // namespace

IdxTensor parse_idx(const std::vector<std::uint8_t>& bytes) {
    std::uint32_t magic = read_u32_be(bytes, 0);
    // 0x0000'08'NN: zero padding, u8 element type, NN dimensions.
    if ((magic & 0xFFFFFF00u) != 0x00000800u)
        throw std::runtime_error("idx: bad magic 0x" + [&] {
            char buf[16];
            std::snprintf(buf, sizeof buf, "%08x", magic);
            return std::string(buf);
        }() + " at byte offset 0");
    std::uint32_t ndim = magic & 0xFFu;
    if (ndim == 0) throw std::runtime_error("idx: zero-dimensional tensor at byte offset 3");

    IdxTensor t;
    std::size_t expected = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
        std::uint32_t size = read_u32_be(bytes, 4 + 4 * static_cast<std::size_t>(d));
        t.dims.push_back(size);
        expected *= size;
    }
    std::size_t payload_off = 4 + 4 * static_cast<std::size_t>(ndim);
    if (bytes.size() < payload_off + expected)
        throw std::runtime_error("idx: truncated at byte offset " + std::to_string(bytes.size()) +
                                 ", expected " + std::to_string(payload_off + expected) +
                                 " bytes");
    t.data.assign(bytes.begin() + payload_off, bytes.begin() + payload_off + expected);
    return t;
}

IdxTensor load_idx(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("idx: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return parse_idx(bytes);
}

}  // namespace clab
