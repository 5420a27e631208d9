#pragma once

#include "lopro/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace lopro {

/// LPRT tensor file: "LPRT", u32 LE version, u64 LE header length, JSON header
/// {"name", "dtype": "f32"|"f64", "shape": [rows, cols]}, zero padding to a
/// 64-byte boundary, then the row-major little-endian payload.
/// A 1-D shape [n] is read as a 1 x n matrix.
inline constexpr std::uint32_t kTensorFileVersion = 1;

enum class TensorDtype { f32, f64 };

std::string_view to_string(TensorDtype d) noexcept;
TensorDtype parse_tensor_dtype(std::string_view s);

struct NamedTensor {
    std::string name;
    TensorDtype dtype = TensorDtype::f32;
    Matrix values;
};

/// f32 output rounds each value to binary32.
std::vector<std::uint8_t> encode_tensor(const std::string& name, const Matrix& m, TensorDtype dtype);
/// Throws std::runtime_error on a malformed buffer; non-finite values are rejected.
NamedTensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor_file(const std::filesystem::path& path, const std::string& name, const Matrix& m,
                       TensorDtype dtype = TensorDtype::f32);
NamedTensor read_tensor_file(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

} // namespace lopro
