// Portable model serialization: a versioned binary container holding a JSON
// metadata block (config snapshot, tagsets, vocabulary, best dev F1), a JSON
// tensor manifest, and a little-endian float32 payload.
#pragma once

#include <map>
#include <string>

#include "dfl/io_error.hpp"
#include "dfl/multitask.hpp"

namespace dfl {

struct CheckpointMeta {
  // Flat key=value snapshot of the run configuration, free-form.
  std::map<std::string, std::string> config;
  double best_dev_f1 = 0.0;
};

// Writes model + meta. The payload quantizes parameters to float32; save
// after load reproduces the file byte for byte.
void save_checkpoint(const std::string& path, const JointModel& model,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  JointModel model;
  CheckpointMeta meta;
};

// Throws IoError when the file cannot be opened and ParseError when the
// container is malformed (bad magic, unknown version, manifest/payload
// disagreement).
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace dfl
