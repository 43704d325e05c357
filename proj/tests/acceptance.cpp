// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. Criterion numbers on the command line select a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "sofuse/checkpoint.hpp"
#include "sofuse/cli.hpp"
#include "sofuse/data.hpp"
#include "sofuse/metrics.hpp"
#include "sofuse/model.hpp"
#include "sofuse/self_organize.hpp"
#include "sofuse/synth.hpp"
#include "sofuse/training.hpp"
#include "support/grad_suite.hpp"

using namespace sofuse;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// Collects failed assertions of one criterion.
struct Check {
  std::vector<std::string> failures;
  std::ostringstream detail;

  void expect(bool ok, const std::string& what) {
    if (!ok && failures.size() < 20) failures.push_back(what);
    if (!ok && failures.size() == 20) failures.push_back("...");
  }
};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "sofuse-acceptance" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// --- 1 ---------------------------------------------------------------------

void gradient_suite(Check& c) {
  const auto t0 = Clock::now();
  const auto entries = sofuse::testing::run_grad_suite(20, 1);
  const double elapsed = seconds_since(t0);
  std::size_t redraws = 0;
  double worst = 0.0;
  for (const auto& e : entries) {
    c.expect(e.instances >= 20, e.name + ": only " + std::to_string(e.instances) + " kink-free instances");
    c.expect(e.max_rel_error < 1e-4, e.name + ": max relative error " + std::to_string(e.max_rel_error));
    redraws += e.redraws;
    worst = std::max(worst, e.max_rel_error);
  }
  c.expect(elapsed < 120.0, "runtime " + std::to_string(elapsed) + " s");
  c.detail << entries.size() << " cases x 20 instances, worst rel error " << worst << ", " << redraws
           << " kink redraws, " << elapsed << " s";
}

// --- 2 ---------------------------------------------------------------------

void sub_topology(Check& c) {
  std::mt19937_64 rng(2024);
  std::size_t compared = 0;
  for (HeadKind head : {HeadKind::Regression, HeadKind::Classification5}) {
    ModelConfig bc;
    bc.head = head;
    bc.seed = 11;
    ModelConfig ac = bc;
    ac.fusion = FusionKind::AllConnected;
    AdModel base(bc);
    AdModel dense(ac);

    const std::size_t d_in = bc.fusion_in_dim();
    const std::size_t c1 = bc.conv_channels[0];
    const std::size_t c2 = bc.conv_channels[1];
    const std::size_t k = bc.conv_kernel;
    const std::size_t out = bc.head_dim();
    const std::size_t cin2 = d_in + c1;

    dense.fusion.conv1.w.value = base.fusion.conv1.w.value;
    dense.fusion.conv1.b.value = base.fusion.conv1.b.value;
    dense.fusion.conv2.b.value = base.fusion.conv2.b.value;
    dense.fusion.head.b.value = base.fusion.head.b.value;
    // conv2 weight is [k, cin, cout]; the baseline reads c1 only.
    for (std::size_t d = 0; d < k; ++d) {
      for (std::size_t i = 0; i < c1; ++i) {
        for (std::size_t o = 0; o < c2; ++o) {
          dense.fusion.conv2.w.value[(d * cin2 + d_in + i) * c2 + o] = base.fusion.conv2.w.value[(d * c1 + i) * c2 + o];
        }
      }
    }
    for (std::size_t i = 0; i < c2; ++i) {
      for (std::size_t o = 0; o < out; ++o) {
        dense.fusion.head.w.value[(d_in + c1 + i) * out + o] = base.fusion.head.w.value[i * out + o];
      }
    }
    // Zero every cross-connection through the pruning path.
    std::vector<Connection> cross;
    for (const WeightSlice& s : dense.fusion.slices()) {
      if (!is_cross_connection(s.group)) continue;
      for (const auto& [b, e] : s.ranges) {
        for (std::size_t i = b; i < e; ++i) cross.push_back({s.layer, i});
      }
    }
    apply_prune(dense, cross);
    c.expect(dense.fusion.active_parameter_count() == base.fusion.parameter_count(),
             "active count after zeroing differs from baseline count");

    for (int n = 0; n < 100; ++n) {
      const AdRecord r = sofuse::testing::random_record(bc, 1 + rng() % 8, rng);
      const Tensor yb = base.predict(r);
      const Tensor ya = dense.predict(r);
      c.expect(yb == ya, to_string(head) + " record " + std::to_string(n) + " differs");
      ++compared;
    }
  }
  c.detail << compared << " default-size records over both heads compared with ==";
}

// --- 3 and 9 -----------------------------------------------------------------

struct SelfOrganizeRun {
  bool ok = false;
  std::string error;
  fs::path dir;
  std::string stdout_text;
  double synth_seconds = 0.0;
  double run_seconds = 0.0;
};

std::vector<json> read_jsonl(const fs::path& p) {
  std::vector<json> out;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

SelfOrganizeRun& default_size_run() {
  static SelfOrganizeRun run;
  static bool done = false;
  if (done) return run;
  done = true;

  const fs::path root = scratch("self-organize");
  const fs::path config = root / "config.json";
  std::ofstream(config) << json{{"model", {{"task", "ctr"}}},
                                {"schedule", {{"plateau_patience", 2}, {"plateau_max_epochs", 4}, {"finetune_epochs", 3}}},
                                {"synth_n", 2000}}
                               .dump(2);
  const auto call = [](std::vector<std::string> args, std::string& text) {
    args.insert(args.begin(), "sofuse");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    text = out.str() + err.str();
    return code;
  };
  std::string text;
  auto t0 = Clock::now();
  int code = call({"synth", "--config", config.string(), "--seed", "1", "--out", (root / "data.jsonl").string()}, text);
  run.synth_seconds = seconds_since(t0);
  if (code != 0) {
    run.error = "synth exit " + std::to_string(code) + ": " + text;
    return run;
  }
  t0 = Clock::now();
  code = call({"self-organize", "--config", config.string(), "--data", (root / "data.jsonl").string(), "--seed", "1",
               "--out", (root / "runs").string()},
              text);
  run.run_seconds = seconds_since(t0);
  run.stdout_text = text;
  if (code != 0) {
    run.error = "self-organize exit " + std::to_string(code) + ": " + text;
    return run;
  }
  const std::string key = "run directory: ";
  const auto at = text.find(key);
  if (at == std::string::npos) {
    run.error = "no run directory in output";
    return run;
  }
  run.dir = text.substr(at + key.size(), text.find('\n', at) - at - key.size());
  fs::remove(root / "data.jsonl");
  run.ok = true;
  return run;
}

void pruning_invariants(Check& c) {
  const SelfOrganizeRun& run = default_size_run();
  if (!run.ok) {
    c.expect(false, run.error);
    return;
  }
  const double fraction = PruneSchedule{}.prune_fraction;
  const auto log = read_jsonl(run.dir / "run.jsonl");
  std::size_t initial = 0, budget = 0;
  std::vector<json> rounds;
  for (const json& e : log) {
    if (e.at("event") == "plateau") {
      initial = e.at("initial_active");
      budget = e.at("budget");
    }
    if (e.at("event") == "round") rounds.push_back(e);
  }
  c.expect(initial > 0 && !rounds.empty(), "no plateau or round events in run log");
  if (rounds.empty()) return;

  // Monotone decrease with per-round sizes ceil(f * remaining).
  std::size_t prev = initial, pruned_sum = 0;
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    const std::size_t pruned = rounds[r].at("pruned");
    const std::size_t remaining = rounds[r].at("remaining");
    c.expect(rounds[r].at("round") == r + 1, "round numbering");
    c.expect(remaining < prev, "round " + std::to_string(r + 1) + " did not decrease the active count");
    c.expect(prev - remaining == pruned, "round " + std::to_string(r + 1) + " pruned/remaining mismatch");
    c.expect(pruned == prune_count(prev, fraction), "round " + std::to_string(r + 1) + " pruned an unexpected count");
    c.expect(r + 1 == rounds.size() || remaining > budget, "a round ran after the budget was met");
    pruned_sum += pruned;
    prev = remaining;
  }
  const std::size_t final_active = prev;
  const std::size_t before_last = rounds.size() > 1 ? std::size_t(rounds[rounds.size() - 2].at("remaining")) : initial;

  // Budget within one round's granularity.
  c.expect(final_active <= budget, "final active count above budget");
  c.expect(budget - final_active < prune_count(before_last, fraction), "overshot the budget by a full round");

  // Report sums.
  const auto topo = read_jsonl(run.dir / "topology.jsonl");
  std::size_t topo_rounds = 0, topo_pruned = 0, survival_active = 0;
  bool saw_final = false;
  for (const json& e : topo) {
    const std::string type = e.at("type");
    if (type == "round") {
      ++topo_rounds;
      topo_pruned += std::size_t(e.at("pruned"));
    } else if (type == "survival") {
      if (e.at("group") != "conv2->pool") survival_active += std::size_t(e.at("active"));
    } else if (type == "final") {
      saw_final = true;
      c.expect(e.at("final_active") == final_active, "topology final_active differs from last round");
      c.expect(e.at("total_pruned") == initial - final_active, "topology total_pruned != initial - final");
    } else if (type == "header") {
      c.expect(e.at("initial_active") == initial && e.at("budget") == budget, "topology header mismatch");
    }
  }
  c.expect(saw_final, "topology.jsonl has no final line");
  c.expect(topo_rounds == rounds.size(), "topology round count differs from run log");
  c.expect(topo_pruned == pruned_sum && pruned_sum == initial - final_active, "sum of pruned != initial - final");
  c.expect(survival_active == final_active, "per-group survival does not add up to the final active count");

  // Mask permanence across per-round snapshots, checked bit by bit.
  const LoadedCheckpoint final_ck = load_checkpoint(run.dir / "model.sofuse");
  const AdModel& model = final_ck.model;
  std::map<std::string, const Parameter*> by_name;
  for (const Parameter* p : model.parameters()) by_name[p->name] = p;
  std::map<std::string, std::vector<char>> prunable;  // per fusion weight, 1 where prunable
  for (const WeightSlice& s : model.fusion.slices()) {
    auto& v = prunable[s.param->name];
    v.resize(s.param->size(), 0);
    for (const auto& [b, e] : s.ranges) {
      for (std::size_t i = b; i < e; ++i) v[i] = s.prunable ? 1 : 0;
    }
  }
  std::map<std::string, std::vector<bool>> previous;
  for (const auto& [name, v] : prunable) previous[name] = std::vector<bool>(v.size(), true);
  for (std::size_t r = 1; r <= rounds.size(); ++r) {
    char file[32];
    std::snprintf(file, sizeof file, "round-%04zu.mask", r);
    const MaskSnapshot snap = load_mask_snapshot(run.dir / "masks" / file);
    c.expect(snap.round == r, std::string("snapshot ") + file + " has the wrong round");
    std::size_t active = 0, newly_masked = 0;
    for (std::size_t t = 0; t < snap.names.size(); ++t) {
      const auto& bits = snap.active[t];
      auto& prev_bits = previous[snap.names[t]];
      const auto& pr = prunable[snap.names[t]];
      if (prev_bits.size() != bits.size()) {
        c.expect(false, "snapshot tensor " + snap.names[t] + " has an unexpected size");
        continue;
      }
      for (std::size_t i = 0; i < bits.size(); ++i) {
        if (bits[i] && !prev_bits[i]) c.expect(false, "round " + std::to_string(r) + " revived " + snap.names[t]);
        if (!bits[i] && !pr[i]) c.expect(false, "round " + std::to_string(r) + " masked a non-prunable weight");
        if (pr[i] && bits[i]) ++active;
        if (prev_bits[i] && !bits[i]) ++newly_masked;
      }
      prev_bits = bits;
    }
    c.expect(active == std::size_t(rounds[r - 1].at("remaining")), "snapshot " + std::string(file) + " active count");
    c.expect(newly_masked == std::size_t(rounds[r - 1].at("pruned")), "snapshot " + std::string(file) + " newly masked");
  }
  // The final model carries the last round's mask, with masked values at zero.
  for (const auto& [name, bits] : previous) {
    const Parameter* p = by_name.at(name);
    for (std::size_t i = 0; i < bits.size(); ++i) {
      if (p->is_active(i) != bits[i]) {
        c.expect(false, "final model mask differs from last snapshot in " + name);
        break;
      }
      if (!bits[i] && (p->value[i] != 0.0 || p->adam_m[i] != 0.0 || p->adam_v[i] != 0.0)) {
        c.expect(false, "masked weight with nonzero value or moments in " + name);
        break;
      }
    }
  }
  for (const Parameter* p : model.parameters()) {
    if (prunable.count(p->name) == 0) c.expect(!p->mask.has_value(), p->name + " outside the fusion block has a mask");
  }
  c.expect(model.active_prunable_count() == final_active, "final model active count differs from run log");

  const double total = run.synth_seconds + run.run_seconds;
  c.expect(total < 600.0, "runtime " + std::to_string(total) + " s");
  c.detail << rounds.size() << " rounds, " << initial << " -> " << final_active << " (budget " << budget << "), "
           << "synth " << run.synth_seconds << " s + self-organize " << run.run_seconds << " s";
}

void parameter_parity(Check& c) {
  const SelfOrganizeRun& run = default_size_run();
  if (!run.ok) {
    c.expect(false, run.error);
    return;
  }
  json parity;
  for (const json& e : read_jsonl(run.dir / "run.jsonl")) {
    if (e.at("event") == "parameter_parity") parity = e;
  }
  for (const char* key : {"baseline_fusion_params", "trimmed_fusion_params", "self_organized_fusion_active_params"}) {
    c.expect(parity.contains(key), std::string("run log lacks ") + key);
  }
  if (!c.failures.empty()) return;
  const std::size_t baseline = parity.at("baseline_fusion_params");
  const std::size_t trimmed = parity.at("trimmed_fusion_params");
  const std::size_t organized = parity.at("self_organized_fusion_active_params");

  const ModelConfig defaults;
  c.expect(baseline == fusion_parameter_count(defaults, FusionKind::Baseline, 128, 128), "logged baseline count");
  // Independent check on an instantiated trimmed model.
  ModelConfig tc = trim_to_budget(defaults, baseline).config;
  const AdModel trimmed_model(tc);
  c.expect(trimmed_model.fusion.active_parameter_count() == trimmed, "logged trimmed count differs from the model");
  c.expect(trimmed <= baseline, "trimmed count above baseline");
  c.expect(organized <= baseline, "self-organized active count above baseline");
  const LoadedCheckpoint ck = load_checkpoint(run.dir / "model.sofuse");
  c.expect(ck.model.fusion_active_parameter_count() == organized, "logged self-organized count differs from model");
  const std::string line = "parameter parity: baseline " + std::to_string(baseline) + ", trimmed " +
                           std::to_string(trimmed) + ", self-organized " + std::to_string(organized);
  c.expect(run.stdout_text.find(line) != std::string::npos, "summary line missing from command output");
  c.detail << "baseline " << baseline << ", trimmed " << trimmed << " (widths " << tc.conv_channels[0] << "/"
           << tc.conv_channels[1] << "), self-organized " << organized;
}

// --- 4 ---------------------------------------------------------------------

// Full sort of (|w|, layer, index) over active prunable weights.
std::vector<Connection> oracle_selection(const std::vector<WeightSlice>& slices, std::size_t num, std::size_t den) {
  struct Key {
    double mag;
    std::size_t layer, index;
  };
  std::vector<Key> keys;
  for (const WeightSlice& s : slices) {
    if (!s.prunable) continue;
    for (const auto& [b, e] : s.ranges) {
      for (std::size_t i = b; i < e; ++i) {
        if (s.param->is_active(i)) keys.push_back({std::abs(s.param->value[i]), s.layer, i});
      }
    }
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.mag != b.mag) return a.mag < b.mag;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.index < b.index;
  });
  // ceil(num/den * active), at least one.
  std::size_t take = (keys.size() * num + den - 1) / den;
  take = std::clamp<std::size_t>(take, keys.empty() ? 0 : 1, keys.size());
  std::vector<Connection> out;
  for (std::size_t i = 0; i < take; ++i) out.push_back({keys[i].layer, keys[i].index});
  return out;
}

void selection_oracle(Check& c) {
  std::mt19937_64 rng(404);
  std::size_t cases = 0;
  const std::vector<std::pair<std::size_t, std::size_t>> fractions{{1, 20}, {1, 100}, {3, 10}, {1, 2}, {1, 1}, {1, 10000}};
  for (const std::string kind : {"uniform", "all_ties", "quantized", "signed_ties"}) {
    // 10,000 weights over three layers; one slice of layer 2 is not prunable.
    Parameter a("a", Tensor({3000}));
    Parameter b("b", Tensor({4500}));
    Parameter h("h", Tensor({2500}));
    for (Parameter* p : {&a, &b, &h}) {
      for (double& v : p->value.data()) {
        if (kind == "uniform") {
          v = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
        } else if (kind == "all_ties") {
          v = 0.25;
        } else if (kind == "quantized") {
          v = 0.1 * static_cast<double>(static_cast<int>(rng() % 7) - 3);
        } else {
          v = (rng() & 1) ? 0.5 : -0.5;
        }
      }
      p->enable_mask();
      for (std::size_t i = 0; i < p->size(); ++i) {
        if (rng() % 10 == 0) (*p->mask)[i] = 0.0;
      }
      p->apply_mask();
    }
    std::vector<WeightSlice> slices{
        {ConnectionGroup::InputToConv1, &a, 0, {{0, 3000}}, true},
        {ConnectionGroup::InputToConv2, &b, 1, {{0, 1000}, {2000, 3000}}, true},
        {ConnectionGroup::Conv1ToConv2, &b, 1, {{1000, 2000}, {3000, 4500}}, true},
        {ConnectionGroup::InputToPool, &h, 2, {{0, 1500}}, true},
        {ConnectionGroup::Conv2ToPool, &h, 2, {{1500, 2500}}, false},
    };
    // Slices are given out of layer order as well, which must not matter.
    std::vector<WeightSlice> shuffled = slices;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    for (const auto& [num, den] : fractions) {
      const double f = static_cast<double>(num) / static_cast<double>(den);
      const auto expected = oracle_selection(slices, num, den);
      const auto got = select_lowest_magnitude(slices, f);
      const auto got_shuffled = select_lowest_magnitude(shuffled, f);
      const std::string tag = kind + " f=" + std::to_string(num) + "/" + std::to_string(den);
      c.expect(got == expected, tag + ": selection differs from the oracle");
      c.expect(got_shuffled == expected, tag + ": selection depends on slice order");
      ++cases;
    }
  }
  c.detail << cases << " (distribution, fraction) cases on 10,000 weights, 10% masked, one unprunable slice";
}

// --- 5 ---------------------------------------------------------------------

double test_mse(const Trainer& t, std::span<const Sample> s) {
  const auto out = t.head_outputs(s);
  double e = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double d = out[i][0] - s[i].target;
    e += d * d;
  }
  return e / static_cast<double>(s.size());
}

void topology_recovery(Check& c) {
  const ConnectionGroup planted = ConnectionGroup::InputToConv2;
  std::size_t wins = 0;
  c.detail << "planted " << to_string(planted) << ";";
  for (std::uint64_t seed : {1, 2, 3}) {
    ModelConfig mc;
    mc.frames = 8;
    mc.visual_in_dim = 16;
    mc.audio_in_dim = 4;
    mc.embed_dim = 8;
    mc.conv_channels = {16, 16};
    mc.seed = seed;
    PlantedSpec spec = PlantedSpec::for_config(mc, planted);
    spec.noise = 0.02;
    spec.audio_frames = 2;
    const SyntheticDataset ds = synth_generate(3000, spec, seed + 100);
    const Partition part = split_indices(ds.records.size(), {{0.8, 0.1, 0.1}, seed});
    const auto tr = gather(ds.records, part.train), va = gather(ds.records, part.val), te = gather(ds.records, part.test);
    const auto s_tr = make_samples(tr, mc.task, mc.head);
    const auto s_va = make_samples(va, mc.task, mc.head);
    const auto s_te = make_samples(te, mc.task, mc.head);
    TrainOptions opt;
    opt.adam.lr = 1e-3;
    opt.shuffle_seed = seed;

    ModelConfig bc = mc;
    bc.fusion = FusionKind::Baseline;
    AdModel base(bc);
    Trainer tb(base, opt);
    train_until_plateau(tb, s_tr, s_va, 5, 200);
    const double mse_base = test_mse(tb, s_te);

    ModelConfig ac = mc;
    ac.fusion = FusionKind::AllConnected;
    AdModel dense(ac);
    Trainer ta(dense, opt);
    PruneSchedule sch;
    sch.budget = prunable_weight_count(mc, FusionKind::Baseline, 16, 16);
    sch.plateau_max_epochs = 200;
    const SelfOrganizeState st = self_organize(dense, ta, s_tr, s_va, sch);
    const double mse_so = test_mse(ta, s_te);
    const double share = st.report.cross_share(planted);

    c.expect(share >= 0.70, "seed " + std::to_string(seed) + ": planted share " + std::to_string(share));
    c.expect(dense.active_prunable_count() <= base.prunable_count(), "active count above the baseline count");
    if (mse_so <= mse_base) ++wins;
    c.detail << " seed " << seed << ": share " << share << ", test MSE " << mse_so << " vs baseline " << mse_base
             << " [";
    for (const GroupSurvival& g : st.report.survival) {
      if (is_cross_connection(g.group)) c.detail << to_string(g.group) << " " << g.active << "/" << g.total << " ";
    }
    c.detail << "];";
  }
  c.expect(wins >= 2, "self-organized beat baseline in only " + std::to_string(wins) + " of 3 seeds");
  c.detail << " wins " << wins << "/3";
}

// --- 6 ---------------------------------------------------------------------

void metrics_fidelity(Check& c) {
  struct Row {
    std::string model;
    double mae;
    double mar_percent;
  };
  const std::vector<Row> t1{{"Baseline", 2.26e-3, 35.5}, {"All-Connected", 2.58e-3, 40.6}, {"Self-Organizing", 2.20e-3, 34.6}};
  const std::vector<Row> t2{{"Baseline", 0.0744, 17.6}, {"All-Connected", 0.0738, 17.4}, {"Self-Organizing", 0.0725, 17.1}};
  const auto run_table = [&](const std::vector<Row>& rows, double target, const std::string& name) {
    std::vector<ReportRow> report_rows;
    for (const Row& r : rows) {
      const double implied = implied_mean_ground_truth(r.mae, r.mar_percent / 100.0);
      c.expect(std::abs(implied - target) <= 0.01 * target, name + " " + r.model + " implied mean " + std::to_string(implied));
      // A test set with that mean and that MAE must reproduce the printed MAR.
      const std::size_t n = 200;
      std::vector<double> gts(n), preds(n);
      for (std::size_t i = 0; i < n; ++i) {
        gts[i] = implied * (0.5 + static_cast<double>(i) / static_cast<double>(n - 1));
        preds[i] = gts[i] + (i % 2 ? r.mae : -r.mae);
      }
      const MetricsReport m = regression_metrics(preds, gts);
      c.expect(std::abs(m.mae - r.mae) < 1e-12 * std::max(1.0, r.mae), name + " " + r.model + " MAE");
      char want[16];
      std::snprintf(want, sizeof want, "%.1f%%", r.mar_percent);
      c.expect(format_percent(m.mar) == want, name + " " + r.model + " MAR " + format_percent(m.mar) + " != " + want);
      c.expect(std::abs(m.mae / m.mar - target) <= 0.01 * target, name + " " + r.model + " recovered mean");
      report_rows.push_back({r.model, r.mae, r.mar_percent / 100.0});
      c.detail << name << " " << r.model << " " << implied << "; ";
    }
    c.expect(consistency_check(report_rows), name + " consistency_check failed");
  };
  run_table(t1, 6.36e-3, "CTR");
  run_table(t2, 0.423, "play3s");
}

// --- 7 ---------------------------------------------------------------------

void binning(Check& c) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 0.2);
  std::vector<double> labels(10007);
  for (double& v : labels) v = u(rng);
  const BinEdges edges = quantile_bins(labels);
  std::array<std::size_t, 5> counts{};
  std::vector<std::pair<double, int>> by_label;
  for (double v : labels) {
    const int k = bin_of(v, edges);
    c.expect(k >= 0 && k < 5, "class out of range");
    if (k < 0 || k >= 5) return;
    ++counts[static_cast<std::size_t>(k)];
    by_label.emplace_back(v, k);
    // Round trip: the label lies inside the interval of its class.
    const double lo = k == 0 ? -INFINITY : edges.edges[static_cast<std::size_t>(k) - 1];
    const double hi = k == 4 ? INFINITY : edges.edges[static_cast<std::size_t>(k)];
    c.expect(v >= lo && (v < hi || k == 4), "label outside its class interval");
  }
  std::sort(by_label.begin(), by_label.end());
  for (std::size_t i = 1; i < by_label.size(); ++i) {
    c.expect(by_label[i].second >= by_label[i - 1].second, "classes not monotone in the label");
  }
  const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
  c.expect(*mx - *mn <= 1, "class counts differ by more than one");
  c.detail << "counts";
  for (std::size_t k : counts) c.detail << " " << k;
}

// --- 8 ---------------------------------------------------------------------

void data_gates(Check& c) {
  const std::vector<std::uint64_t> imps{0, 1, 69998, 69999, 70000, 70001, 69999, 70000, 1000000, 69000, 70000};
  std::vector<AdRecord> records;
  for (std::size_t i = 0; i < imps.size(); ++i) {
    AdRecord r;
    r.id = "ad-" + std::to_string(i);
    r.impressions = imps[i];
    records.push_back(r);
  }
  const auto kept = filter_impressions(records);
  std::vector<std::string> expected;
  for (const AdRecord& r : records) {
    if (r.impressions >= 70000) expected.push_back(r.id);
  }
  std::vector<std::string> got;
  for (const AdRecord& r : kept) got.push_back(r.id);
  c.expect(got == expected, "filter kept the wrong records");

  for (std::size_t n : {std::size_t{9841}, std::size_t{137}, std::size_t{10}}) {
    const SplitSpec spec{{0.8, 0.1, 0.1}, 5};
    const Partition a = split_indices(n, spec);
    const Partition b = split_indices(n, spec);
    c.expect(a.train == b.train && a.val == b.val && a.test == b.test, "split not deterministic");
    std::vector<std::size_t> all;
    for (const auto* part : {&a.train, &a.val, &a.test}) all.insert(all.end(), part->begin(), part->end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> iota(n);
    std::iota(iota.begin(), iota.end(), 0);
    c.expect(all == iota, "split not disjoint and exhaustive for n=" + std::to_string(n));
    if (n == 9841) {
      const auto near = [&](std::size_t got, double ratio) { return std::abs(double(got) - ratio * double(n)) <= 1.0; };
      c.expect(near(a.train.size(), 0.8) && near(a.val.size(), 0.1) && near(a.test.size(), 0.1), "80/10/10 sizes");
      c.detail << "filter kept " << got.size() << "/" << records.size() << "; split 9841 -> " << a.train.size() << "/"
               << a.val.size() << "/" << a.test.size();
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<void(Check&)>>> criteria{
      {1, gradient_suite}, {2, sub_topology},     {3, pruning_invariants}, {4, selection_oracle}, {5, topology_recovery},
      {6, metrics_fidelity}, {7, binning},        {8, data_gates},         {9, parameter_parity}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& [n, fn] : criteria) {
    if (!wanted.empty() && wanted.count(n) == 0) continue;
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const bool ok = c.failures.empty();
    if (!ok) ++failed;
    std::cout << "CRITERION " << n << (ok ? " PASS: " : " FAIL: ") << c.detail.str() << "\n";
    for (const std::string& f : c.failures) std::cout << "    " << f << "\n";
    std::cout.flush();
  }
  fs::remove_all(fs::temp_directory_path() / "sofuse-acceptance");
  return failed == 0 ? 0 : 1;
}
