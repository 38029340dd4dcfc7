#include "vidup/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "vidup/errors.hpp"

namespace vidup::io {

namespace fs = std::filesystem;

void atomic_write(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  require_exists(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingArtifactError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string encode_floats(std::span<const float> values) {
  static_assert(std::endian::native == std::endian::little, "float files are little-endian");
  std::string out(values.size() * sizeof(float), '\0');
  if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

void decode_floats(std::string_view bytes, std::span<float> out, const std::string& what) {
  if (bytes.size() != out.size() * sizeof(float)) {
    throw ConfigError(what + ": expected " + std::to_string(out.size() * sizeof(float)) + " bytes, found " +
                      std::to_string(bytes.size()));
  }
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), bytes.size());
}

void write_json(const fs::path& path, const Json& j) { atomic_write(path, j.dump(2) + "\n"); }

Json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

std::string file_hash(const fs::path& path) { return hex64(fnv1a(read_file(path))); }

const Json& field(const Json& j, std::string_view key, std::string_view context) {
  if (!j.is_object() || !j.contains(key)) {
    throw ConfigError(std::string(context) + ": missing field '" + std::string(key) + "'");
  }
  return j.at(std::string(key));
}

int get_int(const Json& j, std::string_view key, std::string_view context) {
  const Json& v = field(j, key, context);
  if (!v.is_number_integer()) {
    throw ConfigError(std::string(context) + ": field '" + std::string(key) + "' must be an integer");
  }
  return v.get<int>();
}

double get_number(const Json& j, std::string_view key, std::string_view context) {
  const Json& v = field(j, key, context);
  if (!v.is_number()) throw ConfigError(std::string(context) + ": field '" + std::string(key) + "' must be a number");
  return v.get<double>();
}

std::string get_string(const Json& j, std::string_view key, std::string_view context) {
  const Json& v = field(j, key, context);
  if (!v.is_string()) throw ConfigError(std::string(context) + ": field '" + std::string(key) + "' must be a string");
  return v.get<std::string>();
}

bool get_bool(const Json& j, std::string_view key, std::string_view context) {
  const Json& v = field(j, key, context);
  if (!v.is_boolean()) {
    throw ConfigError(std::string(context) + ": field '" + std::string(key) + "' must be a boolean");
  }
  return v.get<bool>();
}

Shape get_shape(const Json& j, std::string_view key, std::string_view context) {
  const Json& v = field(j, key, context);
  Shape s;
  if (!v.is_array()) throw ConfigError(std::string(context) + ": field '" + std::string(key) + "' must be an array");
  for (const auto& d : v) {
    if (!d.is_number_integer() || d.get<int>() < 0) {
      throw ConfigError(std::string(context) + ": field '" + std::string(key) + "' must hold non-negative integers");
    }
    s.push_back(d.get<int>());
  }
  return s;
}

void require_exists(const fs::path& path) {
  if (!fs::exists(path)) throw MissingArtifactError("missing artifact: " + path.string());
}

}  // namespace vidup::io
