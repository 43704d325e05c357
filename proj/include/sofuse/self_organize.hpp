#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sofuse/model.hpp"
#include "sofuse/training.hpp"

namespace sofuse {

struct PruneSchedule {
  double prune_fraction = 0.05;
  std::size_t budget = 0;  // target active prunable count
  std::size_t plateau_patience = 5;
  std::size_t plateau_max_epochs = 50;
  std::size_t finetune_epochs = 3;
  std::size_t max_rounds = 500;

  void validate() const;
  nlohmann::json to_json() const;
  static PruneSchedule from_json(const nlohmann::json& j);
};

// One scalar weight of the fusion block: layer (conv1=0, conv2=1, head=2)
// and flat index into that layer's weight tensor.
struct Connection {
  std::size_t layer = 0;
  std::size_t index = 0;
  friend bool operator==(const Connection&, const Connection&) = default;
};

// ceil(fraction * active), at least 1 and at most `active`.
std::size_t prune_count(std::size_t active, double fraction);

// Sizes of successive rounds taking `fraction` of the remaining count until
// the count is at or below `budget`.
std::vector<std::size_t> prune_round_sizes(std::size_t initial, std::size_t budget, double fraction);

// Lowest-|w| active prunable weights; ties broken by (layer, index).
std::vector<Connection> select_lowest_magnitude(std::span<const WeightSlice> slices, double fraction);
std::vector<Connection> select_lowest_magnitude(const AdModel& model, double fraction);

// Masks the given connections and clears their values and Adam moments.
// Validates every coordinate before touching the model.
void apply_prune(AdModel& model, std::span<const Connection> coords);

struct RoundRecord {
  std::size_t round = 0;  // 1-based
  std::size_t pruned = 0;
  std::size_t remaining = 0;
  double val_before = 0.0;  // after pruning, before fine-tune
  double val_after = 0.0;
  std::string timestamp;
};

struct GroupSurvival {
  ConnectionGroup group;
  std::size_t total = 0;
  std::size_t active = 0;
};

struct TopologyReport {
  std::size_t initial_active = 0;
  std::size_t budget = 0;
  double prune_fraction = 0.0;
  std::size_t plateau_epochs = 0;
  double plateau_val_loss = 0.0;
  std::vector<RoundRecord> rounds;
  std::vector<GroupSurvival> survival;
  std::size_t final_active = 0;

  std::size_t total_pruned() const;
  // Fraction of surviving cross-connection weights that lie in `group`.
  double cross_share(ConnectionGroup group) const;

  nlohmann::json to_json() const;
  static TopologyReport from_json(const nlohmann::json& j);
  // One JSON object per line: header, plateau, rounds, survival, final.
  std::string to_jsonl() const;
  std::string summary_table() const;
};

std::vector<GroupSurvival> group_survival(const AdModel& model);

// Progress carried across an interrupted run.
struct SelfOrganizeState {
  bool plateau_done = false;
  bool completed = false;
  std::size_t epochs_completed = 0;  // trainer epoch counter
  TopologyReport report;

  nlohmann::json to_json() const;
  static SelfOrganizeState from_json(const nlohmann::json& j);
};

struct SelfOrganizeHooks {
  std::function<void(const EpochRecord&)> on_plateau_epoch;
  // Called after the plateau phase and after every round.
  std::function<void(const AdModel&, const SelfOrganizeState&)> on_checkpoint;
  // Stop (without completing) after this many rounds in this invocation.
  std::optional<std::size_t> stop_after_rounds;
};

// Plateau training once, then prune/fine-tune rounds until the active
// prunable count is within budget. Resumes from `state` when given.
SelfOrganizeState self_organize(AdModel& model, Trainer& trainer, std::span<const Sample> train,
                                std::span<const Sample> val, const PruneSchedule& schedule,
                                SelfOrganizeState state = {}, const SelfOrganizeHooks& hooks = {});

std::string utc_timestamp();

}  // namespace sofuse
