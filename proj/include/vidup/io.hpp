#pragma once
// Raw tensor files, atomic writes, content hashes, and JSON helpers shared by
// every persisted artifact.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "vidup/tensor.hpp"

namespace vidup::io {

using Json = nlohmann::json;

// Write via a temporary sibling and rename, so readers never see partial files.
void atomic_write(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

// Little-endian float32, row-major, no header.
std::string encode_floats(std::span<const float> values);
void decode_floats(std::string_view bytes, std::span<float> out, const std::string& what);

void write_json(const std::filesystem::path& path, const Json& j);
Json read_json(const std::filesystem::path& path);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL);
std::string hex64(std::uint64_t v);
std::string file_hash(const std::filesystem::path& path);

// Field access that reports the offending field name in ConfigError.
const Json& field(const Json& j, std::string_view key, std::string_view context);
int get_int(const Json& j, std::string_view key, std::string_view context);
double get_number(const Json& j, std::string_view key, std::string_view context);
std::string get_string(const Json& j, std::string_view key, std::string_view context);
bool get_bool(const Json& j, std::string_view key, std::string_view context);
Shape get_shape(const Json& j, std::string_view key, std::string_view context);

// Throws MissingArtifactError naming the path.
void require_exists(const std::filesystem::path& path);

}  // namespace vidup::io
