#pragma once

// Binary tensor files: "PTNS" | version u8 | dtype u8 | ndim u8 |
// dims u32 LE | row-major little-endian payload.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "panoseg/grid.hpp"
#include "panoseg/numerics/tensor.hpp"

namespace panoseg::io {

enum class DType : std::uint8_t { f32 = 0, u16 = 1, u8 = 2 };

inline constexpr std::uint8_t kPtnsVersion = 1;

std::size_t dtype_size(DType t);
std::string to_string(DType t);

class PtnsError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};
class BadMagicError : public PtnsError {
   public:
    using PtnsError::PtnsError;
};
class BadVersionError : public PtnsError {
   public:
    using PtnsError::PtnsError;
};
class TruncatedError : public PtnsError {
   public:
    using PtnsError::PtnsError;
};
// Unknown dtype code, zero extent, or a value that does not fit the dtype.
class FormatError : public PtnsError {
   public:
    using PtnsError::PtnsError;
};

// Decoded file contents; the payload is kept as raw little-endian bytes.
struct RawTensor {
    DType dtype = DType::f32;
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;

    std::size_t numel() const;
    std::vector<double> values() const;
    nn::Tensor to_tensor() const;
    // Requires a 2-D integer tensor.
    Grid<std::int32_t> to_grid() const;
    Mask to_mask() const;
};

RawTensor make_raw(DType dtype, const nn::Shape& dims, const std::vector<double>& values);

std::vector<std::uint8_t> encode(const RawTensor& t);
// `consumed` receives the record length, so records can be concatenated.
RawTensor decode(const std::uint8_t* data, std::size_t size, std::size_t* consumed = nullptr);

void write_raw(const std::filesystem::path& path, const RawTensor& t);
RawTensor read_raw(const std::filesystem::path& path);

void write_tensor(const std::filesystem::path& path, const nn::Tensor& t, DType dtype = DType::f32);
void write_tensor(const std::filesystem::path& path, const Grid<std::int32_t>& g, DType dtype = DType::u16);
void write_tensor(const std::filesystem::path& path, const Mask& m);
nn::Tensor read_tensor(const std::filesystem::path& path);
Grid<std::int32_t> read_grid(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

}  // namespace panoseg::io
