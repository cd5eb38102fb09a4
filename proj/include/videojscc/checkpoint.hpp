// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.
//
// Checkpoint archive: one file holding the model configuration echo, every
// parameter tensor under a stable name, and (for resumable training runs)
// optimizer state. Float payloads are stored raw, so a save/load round trip
// is bit-exact.

#ifndef VIDEOJSCC_CHECKPOINT_HPP
#define VIDEOJSCC_CHECKPOINT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "videojscc/model.hpp"

namespace videojscc {

struct TrainState {
  std::int64_t step = 0;
  std::int64_t adam_steps = 0;
  std::uint64_t seed = 0;
};

struct CheckpointData {
  ModelConfig config;
  bool has_train_state = false;
  TrainState train_state;
  // Insertion-ordered tensor archive (parameters first, optimizer state after).
  std::vector<std::pair<std::string, Tensor<float>>> tensors;
};

void write_checkpoint(const std::string& path, const CheckpointData& data);
CheckpointData read_checkpoint(const std::string& path);

/// Saves model parameters (and optional training state) to `path`.
void save_model(const std::string& path, Model<float>& model, const TrainState* state = nullptr,
                const std::vector<std::pair<std::string, Tensor<float>>>* extra_tensors = nullptr);

/// Loads parameters into an existing model; the stored configuration must
/// match the model's exactly or a ConfigError is thrown.
void load_model(const std::string& path, Model<float>& model, TrainState* state = nullptr,
                std::map<std::string, Tensor<float>>* extra_tensors = nullptr);

/// Reads just the configuration, then constructs and loads a fresh model.
ModelConfig read_checkpoint_config(const std::string& path);

}  // namespace videojscc

#endif  // VIDEOJSCC_CHECKPOINT_HPP
