#include "sofuse/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "sofuse/checkpoint.hpp"
#include "sofuse/errors.hpp"
#include "sofuse/metrics.hpp"
#include "sofuse/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sofuse::cli {

// ---------------------------------------------------------------------------
// RunConfig

json RunConfig::to_json() const {
  return {{"model", model.to_json()},
          {"schedule", schedule.to_json()},
          {"split", {{"ratios", split.ratios}, {"seed", split.seed}}},
          {"lr", lr},
          {"batch_size", batch_size},
          {"planted", planted.to_json()},
          {"synth_n", synth_n},
          {"dataset", dataset},
          {"out", out},
          {"seed", seed}};
}

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
  if (j.contains("schedule")) c.schedule = PruneSchedule::from_json(j.at("schedule"));
  if (j.contains("split")) {
    const auto& s = j.at("split");
    if (s.contains("ratios")) c.split.ratios = s.at("ratios").get<std::array<double, 3>>();
    c.split.seed = s.value("seed", c.split.seed);
  }
  c.lr = j.value("lr", c.lr);
  c.batch_size = j.value("batch_size", c.batch_size);
  if (j.contains("planted")) c.planted = PlantedSpec::from_json(j.at("planted"));
  c.synth_n = j.value("synth_n", c.synth_n);
  c.dataset = j.value("dataset", c.dataset);
  c.out = j.value("out", c.out);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string RunConfig::hash() const { return config_hash(to_json()); }

namespace {

// ---------------------------------------------------------------------------
// Flags

struct Flags {
  std::optional<std::string> config, task, variant, head, out, data, group, resume, checkpoint, edges, metrics_out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> budget, patience, max_epochs, n, stop_after_rounds, max_rounds, finetune_epochs;
  std::optional<double> prune_fraction, noise, lr;
  std::string split = "test";
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "Run config JSON file");
  app->add_option("--task", f.task, "ctr | play3s");
  app->add_option("--head", f.head, "regression | classification5");
  app->add_option("--seed", f.seed, "Seed for initialization, splits, shuffling and synthesis");
  app->add_option("--out", f.out, "Output directory");
}

void add_training(CLI::App* app, Flags& f) {
  app->add_option("--data", f.data, "Dataset file");
  app->add_option("--patience", f.patience, "Plateau patience in epochs");
  app->add_option("--max-epochs", f.max_epochs, "Cap on plateau epochs");
  app->add_option("--lr", f.lr, "Adam learning rate");
}

RunConfig resolve_config(const Flags& f) {
  json j = json::object();
  if (f.config) {
    std::ifstream in(*f.config);
    if (!in) throw ConfigError("cannot read config " + *f.config);
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError("config " + *f.config + ": " + e.what());
    }
  }
  if (f.task) {
    if (!j.contains("model")) j["model"] = ModelConfig::for_task(parse_task(*f.task)).to_json();
    j["model"]["task"] = *f.task;
  }
  if (f.head) j["model"]["head"] = *f.head;

  RunConfig c;
  try {
    c = RunConfig::from_json(j);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (f.seed) c.seed = *f.seed;
  if (f.out) c.out = *f.out;
  if (f.data) c.dataset = *f.data;
  if (f.patience) c.schedule.plateau_patience = *f.patience;
  if (f.max_epochs) c.schedule.plateau_max_epochs = *f.max_epochs;
  if (f.prune_fraction) c.schedule.prune_fraction = *f.prune_fraction;
  if (f.budget) c.schedule.budget = *f.budget;
  if (f.max_rounds) c.schedule.max_rounds = *f.max_rounds;
  if (f.finetune_epochs) c.schedule.finetune_epochs = *f.finetune_epochs;
  if (f.lr) c.lr = *f.lr;
  if (f.n) c.synth_n = *f.n;
  if (f.noise) c.planted.noise = *f.noise;
  if (f.group) c.planted.group = parse_group(*f.group);

  c.model.seed = c.seed;
  c.split.seed = c.seed;
  c.model.validate();
  if (!(c.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (c.batch_size == 0) throw ConfigError("batch_size must be positive");
  return c;
}

// ---------------------------------------------------------------------------
// Run directory and log

fs::path make_run_dir(const std::string& root, const std::string& command, std::uint64_t seed) {
  fs::create_directories(root);
  std::string stamp = utc_timestamp();
  stamp.erase(std::remove_if(stamp.begin(), stamp.end(), [](char ch) { return ch == ':' || ch == '-'; }),
              stamp.end());
  const std::string base = stamp + "-seed" + std::to_string(seed) + "-" + command;
  for (int i = 0;; ++i) {
    const fs::path dir = fs::path(root) / (i == 0 ? base : base + "-" + std::to_string(i));
    if (fs::create_directory(dir)) return dir;
  }
}

class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {
    if (!out_) throw ConfigError("cannot write run log " + path.string());
  }
  void event(const std::string& name, json fields) {
    fields["event"] = name;
    fields["time"] = utc_timestamp();
    out_ << fields.dump() << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

json seed_lineage(const RunConfig& c) {
  return {{"seed", c.seed}, {"model_seed", c.model.seed}, {"split_seed", c.split.seed}, {"shuffle_seed", c.seed}};
}

// ---------------------------------------------------------------------------
// Data

struct LoadedData {
  std::vector<AdRecord> train, val, test;
};

LoadedData load_split(const RunConfig& c) {
  if (c.dataset.empty()) throw ConfigError("no dataset given (--data)");
  auto records = filter_impressions(load_dataset(c.dataset, c.model.task, c.model));
  const Partition p = split_indices(records.size(), c.split);
  return {gather(records, p.train), gather(records, p.val), gather(records, p.test)};
}

std::vector<double> labels_of(const std::vector<AdRecord>& records, Task task) {
  std::vector<double> out;
  for (const AdRecord& r : records) out.push_back(compute_label(r, task));
  return out;
}

// Evaluates a model on `samples` and returns the report in JSON plus the
// table-ready regression report.
json evaluate_samples(const Trainer& trainer, const AdModel& model, std::span<const Sample> samples,
                      MetricsReport* regression_out) {
  const auto outputs = trainer.head_outputs(samples);
  json j;
  j["n_samples"] = samples.size();
  j["loss"] = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) total += sample_loss(model.config().head, outputs[i], samples[i]);
    return total / static_cast<double>(samples.size());
  }();
  if (model.config().head == HeadKind::Regression) {
    std::vector<double> preds, gts;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      preds.push_back(outputs[i][0]);
      gts.push_back(samples[i].target);
    }
    const MetricsReport r = regression_metrics(preds, gts);
    if (regression_out) *regression_out = r;
    j.update(r.to_json());
    return j;
  }
  std::vector<int> pred, gt;
  std::vector<std::size_t> pred_counts(kClassCount, 0), gt_counts(kClassCount, 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto d = outputs[i].data();
    const int cls = static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
    pred.push_back(cls);
    gt.push_back(samples[i].target_class);
    ++pred_counts[static_cast<std::size_t>(cls)];
    ++gt_counts[static_cast<std::size_t>(samples[i].target_class)];
  }
  const double acc = classification_accuracy(pred, gt);
  if (regression_out) {
    regression_out->accuracy = acc;
    regression_out->n_samples = samples.size();
  }
  j["accuracy"] = acc;
  j["label_class_counts"] = gt_counts;
  j["predicted_class_counts"] = pred_counts;
  return j;
}

std::string report_table(const std::string& name, const MetricsReport& r, bool classification) {
  const TableRow row{name, r};
  return metrics_table(std::span<const TableRow>(&row, 1), classification);
}

ModelConfig variant_config(const RunConfig& c, const std::string& variant, double* retention) {
  ModelConfig m = c.model;
  if (variant == "baseline") {
    m.fusion = FusionKind::Baseline;
  } else if (variant == "all_connected") {
    m.fusion = FusionKind::AllConnected;
  } else if (variant == "all_connected_trimmed") {
    const auto [c1, c2] = c.model.conv_channels;
    const std::size_t budget =
        c.schedule.budget ? c.schedule.budget : fusion_parameter_count(c.model, FusionKind::Baseline, c1, c2);
    const TrimResult t = trim_to_budget(c.model, budget);
    m = t.config;
    if (retention) *retention = t.retention;
  } else {
    throw ConfigError("unknown variant '" + variant + "' (baseline | all_connected | all_connected_trimmed)");
  }
  return m;
}

struct Counts {
  std::size_t baseline_fusion, baseline_prunable, trimmed_fusion;
  double trimmed_retention;
};

Counts reference_counts(const ModelConfig& m) {
  const auto [c1, c2] = m.conv_channels;
  Counts k{};
  k.baseline_fusion = fusion_parameter_count(m, FusionKind::Baseline, c1, c2);
  k.baseline_prunable = prunable_weight_count(m, FusionKind::Baseline, c1, c2);
  const TrimResult t = trim_to_budget(m, k.baseline_fusion);
  k.trimmed_fusion = t.parameter_count;
  k.trimmed_retention = t.retention;
  return k;
}

TrainOptions train_options(const RunConfig& c) {
  TrainOptions o;
  o.adam.lr = c.lr;
  o.batch_size = c.batch_size;
  o.shuffle_seed = c.seed;
  o.eval_threads = eval_threads_from_env();
  return o;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_synth(const RunConfig& c, const Flags& f, std::ostream& out) {
  if (!f.out) throw ConfigError("synth needs --out FILE");
  PlantedSpec spec = PlantedSpec::for_config(c.model, c.planted.group);
  spec.active_coordinates = c.planted.active_coordinates;
  spec.noise = c.planted.noise;
  spec.base = c.planted.base;
  spec.amplitude = c.planted.amplitude;
  spec.audio_frames = c.planted.audio_frames;
  const SyntheticDataset ds = synth_generate(c.synth_n, spec, c.seed);

  const fs::path path(*f.out);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  DatasetHeader header = header_for(c.model);
  header.source_hash = config_hash(spec.to_json());
  write_dataset(path, header, ds.records);
  json topo = ds.topology_json(spec, c.seed);
  topo["source_hash"] = header.source_hash;
  write_text(path.string() + ".topology.json", topo.dump(2) + "\n");
  out << "wrote " << ds.records.size() << " records to " << path.string() << " (noise floor "
      << ds.noise_floor << ")\n";
  return kOk;
}

int cmd_train(RunConfig c, const Flags& f, std::ostream& out) {
  const std::string variant = f.variant.value_or("baseline");
  double retention = 1.0;
  const ModelConfig mc = variant_config(c, variant, &retention);
  const Counts ref = reference_counts(c.model);

  LoadedData data = load_split(c);
  std::optional<BinEdges> edges;
  if (mc.head == HeadKind::Classification5) edges = quantile_bins(labels_of(data.train, mc.task));
  const auto train = make_samples(data.train, mc.task, mc.head, edges ? &*edges : nullptr);
  const auto val = make_samples(data.val, mc.task, mc.head, edges ? &*edges : nullptr);
  const auto test = make_samples(data.test, mc.task, mc.head, edges ? &*edges : nullptr);

  const fs::path dir = make_run_dir(c.out, "train-" + variant, c.seed);
  RunLog log(dir / "run.jsonl");
  log.event("start", {{"command", "train"},
                      {"variant", variant},
                      {"config", c.to_json()},
                      {"config_hash", c.hash()},
                      {"seeds", seed_lineage(c)}});
  if (edges) write_bin_edges(dir / "bin_edges.json", *edges);

  AdModel model(mc);
  json parity{{"variant", variant},
              {"baseline_fusion_params", ref.baseline_fusion},
              {"variant_fusion_params", model.fusion_parameter_count()},
              {"variant_active_fusion_params", model.fusion_active_parameter_count()},
              {"baseline_prunable", ref.baseline_prunable},
              {"variant_active_prunable", model.active_prunable_count()}};
  if (variant == "all_connected_trimmed") {
    parity["retention"] = retention;
    parity["trimmed_channels"] = mc.conv_channels;
  }
  log.event("parameter_parity", parity);

  Trainer trainer(model, train_options(c));
  const PlateauResult plateau = train_until_plateau(
      trainer, train, val, c.schedule.plateau_patience, c.schedule.plateau_max_epochs, [&](const EpochRecord& e) {
        log.event("epoch", {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
      });
  log.event("plateau", {{"epochs", plateau.history.size()},
                        {"best_epoch", plateau.best_epoch},
                        {"best_val_loss", plateau.best_val_loss},
                        {"hit_max_epochs", plateau.hit_max_epochs}});

  MetricsReport test_report;
  const json train_metrics = evaluate_samples(trainer, model, train, nullptr);
  json test_metrics = evaluate_samples(trainer, model, test, &test_report);
  log.event("final_train_metrics", train_metrics);
  log.event("test_metrics", test_metrics);

  const json meta{{"command", "train"},
                  {"variant", variant},
                  {"run_config", c.to_json()},
                  {"run_config_hash", c.hash()},
                  {"seeds", seed_lineage(c)},
                  {"epochs_completed", trainer.epochs_completed()},
                  {"train_metrics", train_metrics}};
  save_checkpoint(dir / "model.sofuse", model, meta);

  test_metrics["config_hash"] = c.hash();
  test_metrics["variant"] = variant;
  test_metrics["split"] = "test";
  write_text(dir / "metrics.json", test_metrics.dump(2) + "\n");
  const std::string table = report_table(variant, test_report, mc.head == HeadKind::Classification5);
  write_text(dir / "metrics.txt", table);
  out << "run directory: " << dir.string() << "\n" << table;
  return kOk;
}

int cmd_self_organize(RunConfig c, const Flags& f, std::ostream& out) {
  fs::path dir;
  std::optional<AdModel> model;
  SelfOrganizeState state;
  std::optional<BinEdges> edges;

  if (f.resume) {
    dir = *f.resume;
    LoadedCheckpoint ck = load_checkpoint(dir / "checkpoint.sofuse");
    if (ck.meta.value("command", "") != "self-organize") {
      throw ConfigError(dir.string() + " is not a self-organize run");
    }
    c = RunConfig::from_json(ck.meta.at("run_config"));
    if (f.data) c.dataset = *f.data;
    state = SelfOrganizeState::from_json(ck.meta.at("state"));
    model.emplace(std::move(ck.model));
    if (model->config().head == HeadKind::Classification5) edges = read_bin_edges(dir / "bin_edges.json");
  } else {
    c.model.fusion = FusionKind::AllConnected;
    const auto [c1, c2] = c.model.conv_channels;
    if (c.schedule.budget == 0) {
      if (f.budget) throw InfeasibleError("budget 0 cannot be reached: selection needs an active weight");
      c.schedule.budget = prunable_weight_count(c.model, FusionKind::Baseline, c1, c2);
    }
    c.schedule.validate();
  }
  const ModelConfig& mc = c.model;

  LoadedData data = load_split(c);
  if (!f.resume && mc.head == HeadKind::Classification5) edges = quantile_bins(labels_of(data.train, mc.task));
  const auto train = make_samples(data.train, mc.task, mc.head, edges ? &*edges : nullptr);
  const auto val = make_samples(data.val, mc.task, mc.head, edges ? &*edges : nullptr);
  const auto test = make_samples(data.test, mc.task, mc.head, edges ? &*edges : nullptr);

  if (!f.resume) {
    dir = make_run_dir(c.out, "self-organize", c.seed);
    if (edges) write_bin_edges(dir / "bin_edges.json", *edges);
    model.emplace(mc);
  }
  RunLog log(dir / "run.jsonl");
  log.event(f.resume ? "resume" : "start", {{"command", "self-organize"},
                                            {"config", c.to_json()},
                                            {"config_hash", c.hash()},
                                            {"seeds", seed_lineage(c)},
                                            {"rounds_done", state.report.rounds.size()}});

  const auto meta_for = [&](const SelfOrganizeState& s) {
    return json{{"command", "self-organize"},
                {"variant", "self_organized"},
                {"run_config", c.to_json()},
                {"run_config_hash", c.hash()},
                {"seeds", seed_lineage(c)},
                {"state", s.to_json()}};
  };

  Trainer trainer(*model, train_options(c));
  SelfOrganizeHooks hooks;
  hooks.on_plateau_epoch = [&](const EpochRecord& e) {
    log.event("epoch", {{"phase", "plateau"}, {"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
  };
  hooks.on_checkpoint = [&](const AdModel& m, const SelfOrganizeState& s) {
    if (s.report.rounds.empty()) {
      log.event("plateau", {{"epochs", s.report.plateau_epochs},
                            {"best_val_loss", s.report.plateau_val_loss},
                            {"initial_active", s.report.initial_active},
                            {"budget", s.report.budget}});
    } else {
      const RoundRecord& r = s.report.rounds.back();
      log.event("round", {{"round", r.round},
                          {"pruned", r.pruned},
                          {"remaining", r.remaining},
                          {"val_before", r.val_before},
                          {"val_after", r.val_after}});
    }
    if (!s.report.rounds.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "round-%04zu.mask", s.report.rounds.size());
      fs::create_directories(dir / "masks");
      save_mask_snapshot(dir / "masks" / name, m, s.report.rounds.size());
    }
    save_checkpoint(dir / "checkpoint.sofuse", m, meta_for(s));
  };
  hooks.stop_after_rounds = f.stop_after_rounds;

  state = self_organize(*model, trainer, train, val, c.schedule, state, hooks);
  if (!state.completed) {
    log.event("stopped", {{"rounds_done", state.report.rounds.size()}});
    out << "run directory: " << dir.string() << "\nstopped after " << state.report.rounds.size()
        << " rounds; continue with --resume " << dir.string() << "\n";
    return kOk;
  }

  const TopologyReport& report = state.report;
  const Counts ref = reference_counts(mc);
  log.event("parameter_parity", {{"baseline_fusion_params", ref.baseline_fusion},
                                 {"trimmed_fusion_params", ref.trimmed_fusion},
                                 {"trimmed_retention", ref.trimmed_retention},
                                 {"self_organized_fusion_active_params", model->fusion_active_parameter_count()},
                                 {"baseline_prunable", ref.baseline_prunable},
                                 {"self_organized_active_prunable", model->active_prunable_count()}});

  MetricsReport test_report;
  const json train_metrics = evaluate_samples(trainer, *model, train, nullptr);
  json test_metrics = evaluate_samples(trainer, *model, test, &test_report);
  log.event("final_train_metrics", train_metrics);
  log.event("test_metrics", test_metrics);

  json meta = meta_for(state);
  meta["train_metrics"] = train_metrics;
  save_checkpoint(dir / "checkpoint.sofuse", *model, meta);
  save_checkpoint(dir / "model.sofuse", *model, meta);

  std::string topo = json{{"type", "run"}, {"config_hash", c.hash()}, {"seed", c.seed}}.dump() + "\n";
  topo += report.to_jsonl();
  write_text(dir / "topology.jsonl", topo);
  write_text(dir / "topology.txt", report.summary_table());
  test_metrics["config_hash"] = c.hash();
  test_metrics["variant"] = "self_organized";
  test_metrics["split"] = "test";
  write_text(dir / "metrics.json", test_metrics.dump(2) + "\n");
  const std::string table = report_table("self_organized", test_report, mc.head == HeadKind::Classification5);
  write_text(dir / "metrics.txt", table);

  out << "run directory: " << dir.string() << "\n"
      << report.summary_table() << "parameter parity: baseline " << ref.baseline_fusion << ", trimmed "
      << ref.trimmed_fusion << ", self-organized " << model->fusion_active_parameter_count() << "\n"
      << table;
  return kOk;
}

int cmd_evaluate(const Flags& f, std::ostream& out) {
  if (!f.checkpoint) throw ConfigError("evaluate needs --checkpoint FILE");
  LoadedCheckpoint ck = load_checkpoint(*f.checkpoint);
  RunConfig c = ck.meta.contains("run_config") ? RunConfig::from_json(ck.meta.at("run_config")) : RunConfig{};
  c.model = ck.model.config();
  if (f.data) c.dataset = *f.data;
  if (f.head && parse_head(*f.head) != c.model.head) {
    throw ConfigError("checkpoint head is " + to_string(c.model.head) + ", not " + *f.head);
  }

  std::optional<BinEdges> edges;
  if (c.model.head == HeadKind::Classification5) {
    const fs::path sidecar = f.edges ? fs::path(*f.edges) : fs::path(*f.checkpoint).parent_path() / "bin_edges.json";
    edges = read_bin_edges(sidecar);
  }

  LoadedData data = load_split(c);
  const std::vector<AdRecord>* records = nullptr;
  std::vector<AdRecord> all;
  if (f.split == "train") {
    records = &data.train;
  } else if (f.split == "val") {
    records = &data.val;
  } else if (f.split == "test") {
    records = &data.test;
  } else if (f.split == "all") {
    all = data.train;
    all.insert(all.end(), data.val.begin(), data.val.end());
    all.insert(all.end(), data.test.begin(), data.test.end());
    records = &all;
  } else {
    throw ConfigError("unknown split '" + f.split + "' (train | val | test | all)");
  }
  const auto samples = make_samples(*records, c.model.task, c.model.head, edges ? &*edges : nullptr);
  if (samples.empty()) throw DataError("split '" + f.split + "' is empty");

  TrainOptions opts;
  opts.eval_threads = eval_threads_from_env();
  Trainer trainer(ck.model, opts);
  MetricsReport report;
  json metrics = evaluate_samples(trainer, ck.model, samples, &report);
  metrics["split"] = f.split;
  metrics["config_hash"] = ck.config_hash;
  if (f.metrics_out) write_text(*f.metrics_out, metrics.dump(2) + "\n");
  out << report_table(ck.meta.value("variant", std::string("model")), report,
                      c.model.head == HeadKind::Classification5)
      << metrics.dump() << "\n";
  return kOk;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config: return kConfig;
    case ErrorKind::Data: return kData;
    case ErrorKind::NonTermination: return kNonTermination;
    case ErrorKind::Contract: return kInternal;
  }
  return kInternal;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-organizing multimodal fusion for ad performance prediction"};
  app.name(args.empty() ? "sofuse" : args[0]);
  app.require_subcommand(1);
  Flags f;

  auto* synth = app.add_subcommand("synth", "Write a planted-topology synthetic dataset");
  add_common(synth, f);
  synth->add_option("--n", f.n, "Number of records");
  synth->add_option("--group", f.group, "Planted connection group, e.g. input->pool");
  synth->add_option("--noise", f.noise, "Label noise standard deviation");

  auto* train = app.add_subcommand("train", "Train one fusion variant to plateau");
  add_common(train, f);
  add_training(train, f);
  train->add_option("--variant", f.variant, "baseline | all_connected | all_connected_trimmed");
  train->add_option("--budget", f.budget, "Fusion parameter budget for the trimmed variant");

  auto* so = app.add_subcommand("self-organize", "Plateau-train, then prune and fine-tune to the budget");
  add_common(so, f);
  add_training(so, f);
  so->add_option("--budget", f.budget, "Active prunable weight budget (default: baseline count)");
  so->add_option("--prune-fraction", f.prune_fraction, "Fraction of remaining weights pruned per round");
  so->add_option("--finetune-epochs", f.finetune_epochs, "Fine-tune epochs after each prune");
  so->add_option("--max-rounds", f.max_rounds, "Give up after this many rounds");
  so->add_option("--resume", f.resume, "Continue the run in this directory");
  so->add_option("--stop-after-rounds", f.stop_after_rounds, "Stop after this many rounds (resumable)");

  auto* eval = app.add_subcommand("evaluate", "Evaluate a checkpoint on a dataset split");
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint file")->required();
  eval->add_option("--data", f.data, "Dataset file (default: the one recorded in the checkpoint)");
  eval->add_option("--split", f.split, "train | val | test | all");
  eval->add_option("--head", f.head, "Expected head kind");
  eval->add_option("--edges", f.edges, "Bin-edge sidecar (default: next to the checkpoint)");
  eval->add_option("--metrics-out", f.metrics_out, "Also write the report here");

  std::vector<std::string> rest(args.size() > 1 ? args.begin() + 1 : args.end(), args.end());
  std::reverse(rest.begin(), rest.end());
  try {
    app.parse(rest);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*eval) return cmd_evaluate(f, out);
    const RunConfig c = resolve_config(f);
    if (*synth) return cmd_synth(c, f, out);
    if (*train) return cmd_train(c, f, out);
    if (*so) return cmd_self_organize(c, f, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kConfig;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}

}  // namespace sofuse::cli
