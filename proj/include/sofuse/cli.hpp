#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "sofuse/data.hpp"
#include "sofuse/model.hpp"
#include "sofuse/self_organize.hpp"
#include "sofuse/synth.hpp"

namespace sofuse::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kConfig = 2, kData = 3, kNonTermination = 4 };

// Everything a run needs. Loaded from a JSON file, then flags override.
struct RunConfig {
  ModelConfig model;
  PruneSchedule schedule;
  SplitSpec split;
  double lr = 1e-4;
  std::size_t batch_size = 8;
  PlantedSpec planted;
  std::size_t synth_n = 2000;
  std::string dataset;
  std::string out = "runs";
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  std::string hash() const;
};

// Entry point used by the sofuse binary and by tests. argv[0] is the
// program name. Returns one of ExitCode.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sofuse::cli
