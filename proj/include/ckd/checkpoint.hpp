#pragma once
// Checkpoint file: one line of compact JSON (shapes, modality ids, seed,
// hyperparameters, tensor table) terminated by '\n', followed by the tensors
// as little-endian IEEE-754 doubles in the order listed in the header.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ckd/backbone.hpp"

namespace ckd {

struct CheckpointMeta {
  std::vector<std::string> modality_ids;
  std::uint64_t seed = 0;
  nlohmann::json hyperparameters = nlohmann::json::object();
};

struct Checkpoint {
  ModelParams params;
  CheckpointMeta meta;
};

std::string encode_checkpoint(const ModelParams& params, const CheckpointMeta& meta);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ckd
