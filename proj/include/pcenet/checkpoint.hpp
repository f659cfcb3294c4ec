#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "pcenet/network.hpp"

namespace pcenet::checkpoint {

inline constexpr char kMagic[8] = {'P', 'C', 'E', 'N', 'E', 'T', 'C', 'K'};
inline constexpr std::uint32_t kFormatVersion = 1;

/// File layout: 8-byte magic, u32 version, u64 header length, JSON header,
/// then little-endian float64 payloads (parameters, Adam m, Adam v) in the
/// tensor order listed by the header.
struct Checkpoint {
  network::ModelConfig model;
  int pyramid_levels = 4;
  nlohmann::json train_config = nlohmann::json::object();
  nlohmann::json degradation_config = nlohmann::json::object();
  network::Parameters params;
  network::Parameters adam_m;
  network::Parameters adam_v;
  long long adam_step = 0;
  int epoch = 0;  // next epoch to run
  long long global_step = 0;
  std::string rng_state;
};

/// Writes to a sibling temporary file and renames it over path, so a failed
/// write leaves any previous checkpoint intact. Throws IoError.
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws IoError or FormatError (bad magic, unsupported version, truncated payload).
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Raw payload bytes for a parameter set, as stored in the file.
std::string parameter_payload(const network::Parameters& params);

nlohmann::json model_config_to_json(const network::ModelConfig& cfg);
network::ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace pcenet::checkpoint
