#ifndef CNCREG_TENSOR_IO_HPP
#define CNCREG_TENSOR_IO_HPP

#include <filesystem>

#include "cncreg/tensor.hpp"

namespace cncreg {

// CNCT container, version 1. Little-endian throughout:
//   bytes 0..3   magic "CNCT"
//   byte  4      format version (0x01)
//   byte  5      dtype code (0x01 = float32)
//   byte  6      ndim
//   then ndim uint32 dimensions, then the row-major float32 payload.
// A rank-2 [2,2] tensor therefore occupies 4+1+1+1+8+16 = 31 bytes.

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

} // namespace cncreg

#endif
