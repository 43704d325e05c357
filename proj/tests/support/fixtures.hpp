#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sofuse/data.hpp"
#include "sofuse/synth.hpp"
#include "sofuse/training.hpp"
#include "support/grad_suite.hpp"

namespace sofuse::testing {

// A planted dataset sized for the tiny model config, already split.
struct SmallData {
  ModelConfig config;
  PlantedSpec spec;
  std::vector<AdRecord> train, val, test;
};

inline SmallData small_data(std::size_t n, std::uint64_t seed, FusionKind fusion = FusionKind::AllConnected,
                            ConnectionGroup group = ConnectionGroup::InputToPool) {
  SmallData d;
  d.config = tiny_config(fusion, HeadKind::Regression);
  d.config.seed = seed;
  d.spec = PlantedSpec::for_config(d.config, group);
  d.spec.audio_frames = 2;
  const SyntheticDataset s = synth_generate(n, d.spec, seed + 1000);
  const Partition p = split_indices(n, SplitSpec{{0.8, 0.1, 0.1}, seed});
  d.train = gather(s.records, p.train);
  d.val = gather(s.records, p.val);
  d.test = gather(s.records, p.test);
  return d;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "sofuse-tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace sofuse::testing
