#include "cncreg/tensor_io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

namespace cncreg {

namespace {

constexpr char kMagic[4] = {'C', 'N', 'C', 'T'};
constexpr std::uint8_t kVersion = 0x01;
constexpr std::uint8_t kDtypeF32 = 0x01;

static_assert(std::endian::native == std::endian::little,
              "CNCT serialization assumes a little-endian host");

[[noreturn]] void fail(IoError::Code code, const std::string& msg) {
    throw IoError(code, msg);
}

} // namespace

void write_tensor(const Tensor& t, const std::filesystem::path& path) {
    // write to a sibling temp file and rename into place, so a crash while
    // writing never leaves a half-formed tensor at the destination
    std::filesystem::path tmp = path;
    tmp += ".tmp";

    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            fail(IoError::Code::OpenFailed,
                 "cannot open for writing: " + tmp.string());

        out.write(kMagic, 4);
        out.put(static_cast<char>(kVersion));
        out.put(static_cast<char>(kDtypeF32));
        out.put(static_cast<char>(t.ndim()));
        for (std::uint32_t d : t.shape())
            out.write(reinterpret_cast<const char*>(&d), sizeof(d));
        out.write(reinterpret_cast<const char*>(t.data().data()),
                  static_cast<std::streamsize>(t.size() * sizeof(float)));
        if (!out)
            fail(IoError::Code::WriteFailed, "short write: " + tmp.string());
    }

    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp);
        fail(IoError::Code::WriteFailed,
             "rename failed: " + path.string() + ": " + ec.message());
    }
}

Tensor read_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        fail(IoError::Code::OpenFailed, "cannot open: " + path.string());

    char header[7];
    if (!in.read(header, sizeof(header)))
        fail(IoError::Code::Truncated, "truncated header: " + path.string());
    if (std::memcmp(header, kMagic, 4) != 0)
        fail(IoError::Code::BadMagic, "bad magic: " + path.string());
    const auto version = static_cast<std::uint8_t>(header[4]);
    if (version != kVersion)
        fail(IoError::Code::UnsupportedVersion,
             "unsupported version " + std::to_string(version) + ": " + path.string());
    const auto dtype = static_cast<std::uint8_t>(header[5]);
    if (dtype != kDtypeF32)
        fail(IoError::Code::UnsupportedDtype,
             "unsupported dtype " + std::to_string(dtype) + ": " + path.string());
    const auto ndim = static_cast<std::uint8_t>(header[6]);
    if (ndim == 0)
        fail(IoError::Code::DimsOverflow, "zero-rank tensor: " + path.string());

    std::vector<std::uint32_t> shape(ndim);
    if (!in.read(reinterpret_cast<char*>(shape.data()),
                 static_cast<std::streamsize>(ndim * sizeof(std::uint32_t))))
        fail(IoError::Code::Truncated, "truncated shape: " + path.string());

    std::size_t count = 0;
    try {
        count = Tensor::checked_element_count(shape);
    } catch (const ValueError& e) {
        fail(IoError::Code::DimsOverflow, std::string(e.what()) + ": " + path.string());
    }

    std::vector<float> data(count);
    if (!in.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(count * sizeof(float))))
        fail(IoError::Code::Truncated, "truncated payload: " + path.string());

    for (float v : data) {
        if (!std::isfinite(v))
            fail(IoError::Code::NonFiniteData,
                 "non-finite payload entry: " + path.string());
    }
    return Tensor(std::move(shape), std::move(data));
}

} // namespace cncreg
