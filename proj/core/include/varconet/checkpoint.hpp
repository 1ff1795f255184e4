#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "varconet/nn.hpp"

namespace varconet {

inline constexpr char kCheckpointMagic[4] = {'V', 'C', 'N', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorEntry {
  std::string name;
  std::vector<std::int64_t> shape;
  std::uint64_t offset = 0;  // bytes from the start of the payload section
};

struct CheckpointHeader {
  std::string format_tag = "VCNC";
  std::uint32_t version = kCheckpointVersion;
  std::vector<TensorEntry> tensors;
  nlohmann::json hyperparameters = nlohmann::json::object();
  int epoch = 0;
};

struct Checkpoint {
  CheckpointHeader header;
  ParamStore params;
};

// Layout: "VCNC", u32 version, u32 header length, JSON header, then the
// f32 payloads back to back in directory order. Values are rounded to f32.
void save_checkpoint(const std::filesystem::path& file, const ParamStore& params,
                     const nlohmann::json& hyperparameters, int epoch);
Checkpoint load_checkpoint(const std::filesystem::path& file);

}  // namespace varconet
