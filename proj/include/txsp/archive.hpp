#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "txsp/params.hpp"

namespace txsp {

using json = nlohmann::json;

inline constexpr int kArchiveVersion = 1;

/// Named-tensor archive:
///   u64 LE header length | JSON header | payload
/// The header is {version, dtype, names: [{name, dims, byte_offset, trainable}],
/// ...extra}; the payload holds the little-endian scalars of every tensor in
/// header order, contiguous from offset 0. Unknown header keys are ignored.
template <typename T>
std::string encode_archive(const ParamSet<T>& params, const json& extra = json::object());

/// Decodes any archive dtype into T. `header` receives the parsed header.
template <typename T>
ParamSet<T> decode_archive(std::string_view bytes, json* header = nullptr);

template <typename T>
void save_archive(const std::filesystem::path& path, const ParamSet<T>& params,
                  const json& extra = json::object());

template <typename T>
ParamSet<T> load_archive(const std::filesystem::path& path, json* header = nullptr);

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

/// CRC-64/XZ (ECMA-182 polynomial, reflected, all-ones init and xorout).
std::uint64_t crc64(std::string_view bytes);

}  // namespace txsp
