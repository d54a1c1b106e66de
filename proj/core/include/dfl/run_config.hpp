// Flat sectioned key=value run configuration shared by the training-side
// commands. Unknown keys are rejected; referenced input paths must exist.
#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "dfl/encoder.hpp"
#include "dfl/io_error.hpp"
#include "dfl/multitask.hpp"

namespace dfl {

// Sections and keys:
//   [data]    train dev test vocab out_dir
//   [encoder] num_layers num_heads d_model d_ff dropout max_len
//   [train]   alpha learning_rate batch_size epochs seed grad_clip_norm aux_tasks
// Paths are resolved relative to the config file's directory.
struct RunConfig {
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string vocab_path;
  std::string out_dir;
  EncoderConfig encoder;
  TrainConfig train;

  // Syntax only; `base_dir` anchors relative paths. ParseError carries the
  // 1-based line number and the offending key.
  static RunConfig parse(std::istream& in, const std::string& base_dir);

  // parse() plus existence checks on every referenced input path.
  static RunConfig load(const std::string& path);

  // Flat "section.key=value" view, stored in checkpoint metadata.
  std::map<std::string, std::string> snapshot() const;
};

}  // namespace dfl
