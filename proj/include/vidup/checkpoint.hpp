#pragma once
// Network checkpoints: a directory holding meta.json (kind, config, metrics,
// tensor index) and tensors.bin (concatenated little-endian float32 tensors).

#include <filesystem>
#include <string>

#include "vidup/io.hpp"
#include "vidup/nn/layers.hpp"

namespace vidup {

void save_network(const std::filesystem::path& dir, const std::string& kind, const io::Json& config,
                  const io::Json& extra, const nn::Sequential& net);

// Reads meta.json and verifies its kind; tensors are not touched.
io::Json read_checkpoint_meta(const std::filesystem::path& dir, const std::string& kind);

// Fills every parameter and buffer of net from the checkpoint by name.
void load_network_tensors(const std::filesystem::path& dir, const io::Json& meta, nn::Sequential& net);

}  // namespace vidup
