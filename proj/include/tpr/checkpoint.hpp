#pragma once

// Binary checkpoint: "TPRC", u32 version, u64 entry count, then per entry
// (u32 name length, name bytes, u32 rank, u64 extents, f64 values), then a u32
// length-prefixed key=value metadata block. All integers and floats are
// little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "tpr/data.hpp"
#include "tpr/kv.hpp"
#include "tpr/model.hpp"
#include "tpr/train.hpp"

namespace tpr::ckpt {

inline constexpr std::uint32_t kVersion = 1;

struct Entry {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const Entry&) const = default;
};

struct Checkpoint {
  std::vector<Entry> entries;
  KvMap meta;

  const Entry* find(std::string_view name) const;
  bool operator==(const Checkpoint&) const = default;
};

std::string to_bytes(const Checkpoint& c);
Checkpoint from_bytes(std::string_view bytes);
void save(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load(const std::filesystem::path& path);

// FNV-1a 64 over the serialized model configuration.
std::string config_fingerprint(const ModelConfig& cfg);

// Parameters in name order plus model config, vocab, seed and history.
Checkpoint snapshot(const Model& model, const data::Vocab& vocab, std::uint64_t seed,
                    const std::vector<train::EpochRecord>& history);

// Copies every entry into the model. Missing names or shape mismatches raise
// CheckpointError.
void restore(Model& model, const Checkpoint& c);

ModelConfig model_config(const Checkpoint& c);
data::Vocab vocab(const Checkpoint& c);
Model load_model(const Checkpoint& c);

}  // namespace tpr::ckpt
