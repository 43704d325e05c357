#include "sofuse/self_organize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <tuple>

#include "sofuse/errors.hpp"

namespace sofuse {

void PruneSchedule::validate() const {
  if (!(prune_fraction > 0.0 && prune_fraction <= 1.0)) {
    throw ConfigError("prune_fraction must lie in (0,1], got " + std::to_string(prune_fraction));
  }
  if (budget == 0) throw ConfigError("prune budget must be positive");
  if (plateau_patience == 0) throw ConfigError("plateau_patience must be positive");
  if (plateau_max_epochs == 0) throw ConfigError("plateau_max_epochs must be positive");
  if (max_rounds == 0) throw ConfigError("max_rounds must be positive");
}

nlohmann::json PruneSchedule::to_json() const {
  return {{"prune_fraction", prune_fraction},   {"budget", budget},
          {"plateau_patience", plateau_patience}, {"plateau_max_epochs", plateau_max_epochs},
          {"finetune_epochs", finetune_epochs},   {"max_rounds", max_rounds}};
}

PruneSchedule PruneSchedule::from_json(const nlohmann::json& j) {
  PruneSchedule s;
  s.prune_fraction = j.value("prune_fraction", s.prune_fraction);
  s.budget = j.value("budget", s.budget);
  s.plateau_patience = j.value("plateau_patience", s.plateau_patience);
  s.plateau_max_epochs = j.value("plateau_max_epochs", s.plateau_max_epochs);
  s.finetune_epochs = j.value("finetune_epochs", s.finetune_epochs);
  s.max_rounds = j.value("max_rounds", s.max_rounds);
  return s;
}

std::size_t prune_count(std::size_t active, double fraction) {
  if (active == 0) return 0;
  // The epsilon keeps exact products such as 0.05 * 1000 from rounding up.
  const double raw = std::ceil(fraction * static_cast<double>(active) - 1e-9);
  const auto n = static_cast<std::size_t>(std::max(1.0, raw));
  return std::min(n, active);
}

std::vector<std::size_t> prune_round_sizes(std::size_t initial, std::size_t budget, double fraction) {
  std::vector<std::size_t> sizes;
  std::size_t remaining = initial;
  while (remaining > budget && remaining > 0) {
    const std::size_t n = prune_count(remaining, fraction);
    sizes.push_back(n);
    remaining -= n;
  }
  return sizes;
}

// ---------------------------------------------------------------------------

namespace {

struct Candidate {
  double magnitude;
  std::size_t layer;
  std::size_t index;
};

bool candidate_less(const Candidate& a, const Candidate& b) {
  return std::tie(a.magnitude, a.layer, a.index) < std::tie(b.magnitude, b.layer, b.index);
}

Parameter& fusion_weight(AdModel& model, std::size_t layer) {
  switch (layer) {
    case 0: return model.fusion.conv1.w;
    case 1: return model.fusion.conv2.w;
    case 2: return model.fusion.head.w;
  }
  throw ContractError("no fusion layer " + std::to_string(layer));
}

bool in_prunable_slice(std::span<const WeightSlice> slices, const Connection& c) {
  for (const WeightSlice& s : slices) {
    if (!s.prunable || s.layer != c.layer) continue;
    for (auto [b, e] : s.ranges) {
      if (c.index >= b && c.index < e) return true;
    }
  }
  return false;
}

}  // namespace

std::vector<Connection> select_lowest_magnitude(std::span<const WeightSlice> slices, double fraction) {
  std::vector<Candidate> pool;
  for (const WeightSlice& s : slices) {
    if (!s.prunable) continue;
    for (auto [b, e] : s.ranges) {
      for (std::size_t i = b; i < e; ++i) {
        if (s.param->is_active(i)) pool.push_back({std::abs(s.param->value[i]), s.layer, i});
      }
    }
  }
  if (pool.empty()) throw ExhaustedError("no active prunable weights left to select");
  const std::size_t n = prune_count(pool.size(), fraction);
  const auto mid = pool.begin() + static_cast<std::ptrdiff_t>(n);
  std::nth_element(pool.begin(), mid - 1, pool.end(), candidate_less);
  std::sort(pool.begin(), mid, candidate_less);
  std::vector<Connection> out;
  out.reserve(n);
  for (auto it = pool.begin(); it != mid; ++it) out.push_back({it->layer, it->index});
  return out;
}

std::vector<Connection> select_lowest_magnitude(const AdModel& model, double fraction) {
  const auto slices = model.fusion.slices();
  return select_lowest_magnitude(slices, fraction);
}

void apply_prune(AdModel& model, std::span<const Connection> coords) {
  const auto slices = model.fusion.slices();
  std::vector<Connection> seen(coords.begin(), coords.end());
  std::sort(seen.begin(), seen.end(), [](const Connection& a, const Connection& b) {
    return std::tie(a.layer, a.index) < std::tie(b.layer, b.index);
  });
  for (std::size_t i = 0; i < seen.size(); ++i) {
    const Connection& c = seen[i];
    if (c.layer > 2 || c.index >= fusion_weight(model, c.layer).size()) {
      throw ContractError("connection (" + std::to_string(c.layer) + "," + std::to_string(c.index) +
                          ") is out of range");
    }
    if (!in_prunable_slice(slices, c)) {
      throw ContractError("connection (" + std::to_string(c.layer) + "," + std::to_string(c.index) +
                          ") is outside the prunable region");
    }
    if ((i > 0 && seen[i - 1] == c) || !fusion_weight(model, c.layer).is_active(c.index)) {
      throw DoublePruneError("connection (" + std::to_string(c.layer) + "," + std::to_string(c.index) +
                             ") is already pruned");
    }
  }
  for (const Connection& c : coords) {
    Parameter& p = fusion_weight(model, c.layer);
    (*p.mask)[c.index] = 0.0;
    p.value[c.index] = 0.0;
    p.adam_m[c.index] = 0.0;
    p.adam_v[c.index] = 0.0;
  }
}

// ---------------------------------------------------------------------------

std::vector<GroupSurvival> group_survival(const AdModel& model) {
  std::vector<GroupSurvival> out;
  for (ConnectionGroup g : kAllGroups) out.push_back({g, 0, 0});
  for (const WeightSlice& s : model.fusion.slices()) {
    for (GroupSurvival& gs : out) {
      if (gs.group != s.group) continue;
      gs.total += s.size();
      gs.active += s.active_count();
    }
  }
  return out;
}

std::size_t TopologyReport::total_pruned() const {
  std::size_t n = 0;
  for (const RoundRecord& r : rounds) n += r.pruned;
  return n;
}

double TopologyReport::cross_share(ConnectionGroup group) const {
  std::size_t cross = 0, in_group = 0;
  for (const GroupSurvival& s : survival) {
    if (!is_cross_connection(s.group)) continue;
    cross += s.active;
    if (s.group == group) in_group += s.active;
  }
  return cross ? static_cast<double>(in_group) / static_cast<double>(cross) : 0.0;
}

namespace {

nlohmann::json round_json(const RoundRecord& r) {
  return {{"round", r.round},           {"pruned", r.pruned},       {"remaining", r.remaining},
          {"val_before", r.val_before}, {"val_after", r.val_after}, {"timestamp", r.timestamp}};
}

nlohmann::json survival_json(const GroupSurvival& s) {
  return {{"group", to_string(s.group)}, {"total", s.total}, {"active", s.active}};
}

}  // namespace

nlohmann::json TopologyReport::to_json() const {
  nlohmann::json rounds_j = nlohmann::json::array();
  for (const RoundRecord& r : rounds) rounds_j.push_back(round_json(r));
  nlohmann::json surv_j = nlohmann::json::array();
  for (const GroupSurvival& s : survival) surv_j.push_back(survival_json(s));
  return {{"initial_active", initial_active},
          {"budget", budget},
          {"prune_fraction", prune_fraction},
          {"plateau_epochs", plateau_epochs},
          {"plateau_val_loss", plateau_val_loss},
          {"rounds", rounds_j},
          {"survival", surv_j},
          {"final_active", final_active}};
}

TopologyReport TopologyReport::from_json(const nlohmann::json& j) {
  TopologyReport r;
  r.initial_active = j.at("initial_active").get<std::size_t>();
  r.budget = j.at("budget").get<std::size_t>();
  r.prune_fraction = j.at("prune_fraction").get<double>();
  r.plateau_epochs = j.value("plateau_epochs", std::size_t{0});
  r.plateau_val_loss = j.value("plateau_val_loss", 0.0);
  for (const auto& x : j.value("rounds", nlohmann::json::array())) {
    RoundRecord rr;
    rr.round = x.at("round").get<std::size_t>();
    rr.pruned = x.at("pruned").get<std::size_t>();
    rr.remaining = x.at("remaining").get<std::size_t>();
    rr.val_before = x.at("val_before").get<double>();
    rr.val_after = x.at("val_after").get<double>();
    rr.timestamp = x.value("timestamp", "");
    r.rounds.push_back(rr);
  }
  for (const auto& x : j.value("survival", nlohmann::json::array())) {
    r.survival.push_back({parse_group(x.at("group").get<std::string>()), x.at("total").get<std::size_t>(),
                          x.at("active").get<std::size_t>()});
  }
  r.final_active = j.value("final_active", std::size_t{0});
  return r;
}

std::string TopologyReport::to_jsonl() const {
  std::ostringstream out;
  out << nlohmann::json{{"type", "header"},
                        {"initial_active", initial_active},
                        {"budget", budget},
                        {"prune_fraction", prune_fraction}}
             .dump()
      << '\n';
  out << nlohmann::json{{"type", "plateau"}, {"epochs", plateau_epochs}, {"val_loss", plateau_val_loss}}.dump()
      << '\n';
  for (const RoundRecord& r : rounds) {
    auto j = round_json(r);
    j["type"] = "round";
    out << j.dump() << '\n';
  }
  for (const GroupSurvival& s : survival) {
    auto j = survival_json(s);
    j["type"] = "survival";
    out << j.dump() << '\n';
  }
  out << nlohmann::json{{"type", "final"}, {"final_active", final_active}, {"total_pruned", total_pruned()}}.dump()
      << '\n';
  return out.str();
}

std::string TopologyReport::summary_table() const {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "initial active %zu, budget %zu, final active %zu, rounds %zu\n", initial_active,
                budget, final_active, rounds.size());
  out << line;
  std::snprintf(line, sizeof line, "%-16s| %-10s| %-10s| %-8s\n", "Group", "Total", "Active", "Kept");
  out << line << std::string(50, '-') << '\n';
  for (const GroupSurvival& s : survival) {
    if (s.total == 0) continue;
    std::snprintf(line, sizeof line, "%-16s| %-10zu| %-10zu| %5.1f%%\n", to_string(s.group).c_str(), s.total,
                  s.active, 100.0 * static_cast<double>(s.active) / static_cast<double>(s.total));
    out << line;
  }
  return out.str();
}

nlohmann::json SelfOrganizeState::to_json() const {
  return {{"plateau_done", plateau_done},
          {"completed", completed},
          {"epochs_completed", epochs_completed},
          {"report", report.to_json()}};
}

SelfOrganizeState SelfOrganizeState::from_json(const nlohmann::json& j) {
  SelfOrganizeState s;
  s.plateau_done = j.at("plateau_done").get<bool>();
  s.completed = j.at("completed").get<bool>();
  s.epochs_completed = j.at("epochs_completed").get<std::size_t>();
  s.report = TopologyReport::from_json(j.at("report"));
  return s;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

// ---------------------------------------------------------------------------

SelfOrganizeState self_organize(AdModel& model, Trainer& trainer, std::span<const Sample> train,
                                std::span<const Sample> val, const PruneSchedule& schedule, SelfOrganizeState state,
                                const SelfOrganizeHooks& hooks) {
  if (model.config().fusion != FusionKind::AllConnected) {
    throw ConfigError("self-organizing needs the all_connected fusion variant");
  }
  schedule.validate();
  if (train.empty()) throw DataError("training set is empty");
  if (val.empty()) throw DataError("validation set is empty");
  if (state.completed) return state;

  TopologyReport& report = state.report;
  if (!state.plateau_done) {
    report = TopologyReport{};
    report.initial_active = model.active_prunable_count();
    report.budget = schedule.budget;
    report.prune_fraction = schedule.prune_fraction;
    const PlateauResult plateau = train_until_plateau(trainer, train, val, schedule.plateau_patience,
                                                      schedule.plateau_max_epochs, hooks.on_plateau_epoch);
    report.plateau_epochs = plateau.history.size();
    report.plateau_val_loss = plateau.best_val_loss;
    state.plateau_done = true;
    state.epochs_completed = trainer.epochs_completed();
    if (hooks.on_checkpoint) hooks.on_checkpoint(model, state);
  } else {
    trainer.set_epochs_completed(state.epochs_completed);
  }

  std::size_t rounds_this_call = 0;
  while (model.active_prunable_count() > schedule.budget) {
    if (hooks.stop_after_rounds && rounds_this_call >= *hooks.stop_after_rounds) return state;
    if (report.rounds.size() >= schedule.max_rounds) {
      throw NonTerminationError("budget " + std::to_string(schedule.budget) + " not reached after " +
                                std::to_string(schedule.max_rounds) + " rounds (active " +
                                std::to_string(model.active_prunable_count()) + ")");
    }
    const auto coords = select_lowest_magnitude(model, schedule.prune_fraction);
    apply_prune(model, coords);

    RoundRecord rec;
    rec.round = report.rounds.size() + 1;
    rec.pruned = coords.size();
    rec.val_before = trainer.evaluate_loss(val);
    for (std::size_t e = 0; e < schedule.finetune_epochs; ++e) trainer.train_epoch(train);
    rec.val_after = trainer.evaluate_loss(val);
    rec.remaining = model.active_prunable_count();
    rec.timestamp = utc_timestamp();
    report.rounds.push_back(rec);
    state.epochs_completed = trainer.epochs_completed();
    ++rounds_this_call;
    if (hooks.on_checkpoint) hooks.on_checkpoint(model, state);
  }

  report.survival = group_survival(model);
  report.final_active = model.active_prunable_count();
  state.completed = true;
  return state;
}

}  // namespace sofuse
