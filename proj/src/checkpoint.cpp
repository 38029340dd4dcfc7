#include "vidup/checkpoint.hpp"

#include <map>

#include "vidup/errors.hpp"

namespace vidup {

namespace fs = std::filesystem;

void save_network(const fs::path& dir, const std::string& kind, const io::Json& config, const io::Json& extra,
                  const nn::Sequential& net) {
  std::string blob;
  io::Json index = io::Json::array();
  auto append = [&](const nn::Param* p, bool trainable) {
    index.push_back({{"name", p->name},
                     {"shape", p->value.shape()},
                     {"offset", blob.size()},
                     {"trainable", trainable}});
    blob += io::encode_floats(p->value.values());
  };
  for (const nn::Param* p : net.params()) append(p, true);
  for (const nn::Param* p : net.buffers()) append(p, false);
  io::atomic_write(dir / "tensors.bin", blob);
  io::Json meta{{"format", "vidup-checkpoint"},
                {"kind", kind},
                {"config", config},
                {"tensors", {{"file", "tensors.bin"}, {"dtype", "float32"}, {"byte_order", "little"},
                             {"order", "row-major"}, {"index", index}}},
                {"tensors_hash", io::hex64(io::fnv1a(blob))}};
  for (auto it = extra.begin(); extra.is_object() && it != extra.end(); ++it) meta[it.key()] = it.value();
  io::write_json(dir / "meta.json", meta);
}

io::Json read_checkpoint_meta(const fs::path& dir, const std::string& kind) {
  const io::Json meta = io::read_json(dir / "meta.json");
  constexpr std::string_view ctx = "checkpoint meta";
  if (io::get_string(meta, "format", ctx) != "vidup-checkpoint") {
    throw ConfigError("checkpoint meta: field 'format' is not vidup-checkpoint");
  }
  if (io::get_string(meta, "kind", ctx) != kind) {
    throw ConfigError("checkpoint meta: field 'kind' is '" + meta["kind"].get<std::string>() + "', expected '" + kind + "'");
  }
  io::field(meta, "config", ctx);
  io::field(meta, "tensors", ctx);
  return meta;
}

void load_network_tensors(const fs::path& dir, const io::Json& meta, nn::Sequential& net) {
  constexpr std::string_view ctx = "checkpoint tensors";
  const io::Json& tensors = io::field(meta, "tensors", "checkpoint meta");
  const std::string blob = io::read_file(dir / io::get_string(tensors, "file", ctx));
  std::map<std::string, const io::Json*> by_name;
  for (const auto& e : io::field(tensors, "index", ctx)) by_name[io::get_string(e, "name", ctx)] = &e;
  auto fill = [&](nn::Param* p) {
    auto it = by_name.find(p->name);
    if (it == by_name.end()) throw ConfigError("checkpoint tensors: missing tensor '" + p->name + "'");
    const io::Json& e = *it->second;
    if (io::get_shape(e, "shape", ctx) != p->value.shape()) {
      throw ConfigError("checkpoint tensors: field 'shape' of '" + p->name + "' disagrees with the network");
    }
    const auto offset = static_cast<std::size_t>(io::field(e, "offset", ctx).get<std::uint64_t>());
    const std::size_t bytes = p->value.size() * sizeof(float);
    if (offset + bytes > blob.size()) throw ConfigError("checkpoint tensors: field 'offset' of '" + p->name + "' past end of file");
    io::decode_floats(std::string_view(blob).substr(offset, bytes), p->value.values(), p->name);
  };
  for (nn::Param* p : net.params()) fill(p);
  for (nn::Param* p : net.buffers()) fill(p);
}

}  // namespace vidup
