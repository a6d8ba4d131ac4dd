#pragma once

// Directory checkpoints: manifest.json (format version, model spec, tensor
// registry) plus weights.bin (raw little-endian float32).  Round trips are
// bit exact.

#include <string>

#include "rrelu/model.hpp"

namespace rrelu {

inline constexpr int kCheckpointFormatVersion = 1;

// Creates the directory if needed; overwrites existing files.
void save_checkpoint(const Network& net, const std::string& dir);

// Throws CheckpointError with kind CorruptManifest, TruncatedBlob,
// Incompatible or Io depending on the failure.
Network load_checkpoint(const std::string& dir);

}  // namespace rrelu
