// Copyright (c) the videojscc authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0; see the LICENSE file.

#include "videojscc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace videojscc {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes little-endian floats");

namespace {

constexpr char kMagic[8] = {'V', 'J', 'S', 'C', 'K', 'P', 'T', '1'};

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"channel_dim", c.channel_dim},
          {"gop_size", c.gop_size},
          {"resblock_depth", c.resblock_depth},
          {"snr_train_db", c.snr_train_db},
          {"hyper_dim", c.hyper_dim}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.channel_dim = j.at("channel_dim").get<int>();
  c.gop_size = j.at("gop_size").get<int>();
  c.resblock_depth = j.at("resblock_depth").get<int>();
  c.snr_train_db = j.at("snr_train_db").get<double>();
  c.hyper_dim = j.at("hyper_dim").get<int>();
  return c;
}

}  // namespace

void write_checkpoint(const std::string& path, const CheckpointData& data) {
  nlohmann::json header;
  header["format"] = 1;
  header["config"] = config_to_json(data.config);
  if (data.has_train_state) {
    header["train_state"] = {{"step", data.train_state.step},
                             {"adam_steps", data.train_state.adam_steps},
                             {"seed", data.train_state.seed}};
  }
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : data.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.shape()}, {"dtype", "f32"}});
  }
  header["tensors"] = tensors;
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t hlen = header_str.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : data.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
  }
  if (!out) throw ConfigError("failed writing checkpoint: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ConfigError("not a videojscc checkpoint: " + path);
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header_str(hlen, '\0');
  in.read(header_str.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw ConfigError("truncated checkpoint header: " + path);
  nlohmann::json header = nlohmann::json::parse(header_str);

  CheckpointData data;
  data.config = config_from_json(header.at("config"));
  if (header.contains("train_state")) {
    data.has_train_state = true;
    data.train_state.step = header["train_state"].at("step").get<std::int64_t>();
    data.train_state.adam_steps = header["train_state"].at("adam_steps").get<std::int64_t>();
    data.train_state.seed = header["train_state"].at("seed").get<std::uint64_t>();
  }
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    Tensor<float> t(shape);
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!in) throw ConfigError("truncated checkpoint payload at tensor " + name);
    data.tensors.emplace_back(name, std::move(t));
  }
  return data;
}

void save_model(const std::string& path, Model<float>& model, const TrainState* state,
                const std::vector<std::pair<std::string, Tensor<float>>>* extra_tensors) {
  CheckpointData data;
  data.config = model.config();
  if (state != nullptr) {
    data.has_train_state = true;
    data.train_state = *state;
  }
  for (const auto& p : model.params()) data.tensors.emplace_back(p.name, *p.value);
  if (extra_tensors != nullptr) {
    for (const auto& [name, t] : *extra_tensors) data.tensors.emplace_back(name, t);
  }
  write_checkpoint(path, data);
}

void load_model(const std::string& path, Model<float>& model, TrainState* state,
                std::map<std::string, Tensor<float>>* extra_tensors) {
  CheckpointData data = read_checkpoint(path);
  if (!(data.config == model.config())) {
    throw ConfigError("checkpoint configuration does not match the model (checkpoint: channel_dim=" +
                      std::to_string(data.config.channel_dim) + ", gop_size=" + std::to_string(data.config.gop_size) +
                      ", resblock_depth=" + std::to_string(data.config.resblock_depth) +
                      ", hyper_dim=" + std::to_string(data.config.hyper_dim) + ")");
  }
  std::map<std::string, Tensor<float>*> archive;
  std::map<std::string, Tensor<float>> extras;
  for (auto& [name, t] : data.tensors) {
    if (name.rfind("opt.", 0) == 0) {
      extras.emplace(name, std::move(t));
    } else {
      archive.emplace(name, &t);
    }
  }
  for (const auto& p : model.params()) {
    auto it = archive.find(p.name);
    if (it == archive.end()) throw ConfigError("checkpoint is missing tensor " + p.name);
    if (it->second->shape() != p.value->shape())
      throw ConfigError("checkpoint tensor " + p.name + " has shape " + it->second->shape_str() + ", expected " +
                        p.value->shape_str());
    *p.value = std::move(*it->second);
  }
  if (state != nullptr && data.has_train_state) *state = data.train_state;
  if (extra_tensors != nullptr) *extra_tensors = std::move(extras);
}

ModelConfig read_checkpoint_config(const std::string& path) { return read_checkpoint(path).config; }

}  // namespace videojscc
