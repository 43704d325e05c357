#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sofuse/model.hpp"

namespace sofuse {

inline constexpr const char* kCheckpointMagic = "SOFUSE1";

// 16 hex digits of FNV-1a 64 over the compact JSON dump.
std::string config_hash(const nlohmann::json& j);

// File layout: "SOFUSE1\n", header byte length and "\n", a JSON header
// (config, config hash, parameter table, caller metadata), then for each
// parameter its value, mask (if any), adam_m and adam_v as little-endian
// doubles.
void save_checkpoint(const std::filesystem::path& path, const AdModel& model, const nlohmann::json& meta = {});

struct LoadedCheckpoint {
  AdModel model;
  nlohmann::json meta;
  std::string config_hash;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

// Prune masks of the fusion weights after one round: a JSON header line, then
// one bit per weight (1 = active), LSB first, per tensor in header order.
struct MaskSnapshot {
  std::size_t round = 0;
  std::vector<std::string> names;
  std::vector<std::vector<bool>> active;
};

void save_mask_snapshot(const std::filesystem::path& path, const AdModel& model, std::size_t round);
MaskSnapshot load_mask_snapshot(const std::filesystem::path& path);

}  // namespace sofuse
