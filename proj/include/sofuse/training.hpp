#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "sofuse/data.hpp"
#include "sofuse/model.hpp"
#include "sofuse/optim.hpp"

namespace sofuse {

// A record paired with its supervised target.
struct Sample {
  const AdRecord* record = nullptr;
  double target = 0.0;   // regression label
  int target_class = 0;  // classification label
};

// Builds samples for `head`. Classification requires bin edges.
std::vector<Sample> make_samples(const std::vector<AdRecord>& records, Task task, HeadKind head,
                                 const BinEdges* edges = nullptr);

struct TrainOptions {
  AdamConfig adam{};
  std::size_t batch_size = 8;
  std::uint64_t shuffle_seed = 0;
  std::size_t eval_threads = 1;
};

// Evaluation thread cap from SOFUSE_THREADS (default 1).
std::size_t eval_threads_from_env();

// Full copy of every parameter (values, masks, Adam state).
struct ModelState {
  std::vector<Parameter> params;
};
ModelState snapshot(const AdModel& model);
void restore(AdModel& model, const ModelState& state);

// Single-threaded mini-batch trainer. Batches are built on one tape and the
// loss is the batch mean, so gradients match the mean-loss definition.
class Trainer {
 public:
  Trainer(AdModel& model, TrainOptions options);

  // One pass over `train` in a seeded order; returns the mean training loss.
  double train_epoch(std::span<const Sample> train);
  // Loss of one batch; accumulates gradients into the parameters.
  double accumulate_batch(std::span<const Sample* const> batch);

  // Raw head outputs (regression value or logits), in input order. May run
  // on several threads; results do not depend on the thread count.
  std::vector<Tensor> head_outputs(std::span<const Sample> data) const;
  // Mean per-sample task loss (MSE or cross-entropy).
  double evaluate_loss(std::span<const Sample> data) const;

  std::size_t epochs_completed() const { return epochs_completed_; }
  void set_epochs_completed(std::size_t n) { epochs_completed_ = n; }
  AdModel& model() { return model_; }
  const TrainOptions& options() const { return options_; }

 private:
  AdModel& model_;
  TrainOptions options_;
  Adam adam_;
  std::size_t epochs_completed_ = 0;
};

double sample_loss(HeadKind head, const Tensor& head_output, const Sample& sample);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based within the plateau run
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct PlateauResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_loss = 0.0;
  bool hit_max_epochs = false;
};

// Callbacks the plateau driver needs; lets the patience contract be checked
// independently of a model.
struct PlateauHooks {
  std::function<double()> train_epoch;
  std::function<double()> validate;
  std::function<void()> snapshot;  // remember current weights as best
  std::function<void()> restore;   // go back to the remembered weights
  std::function<void(const EpochRecord&)> on_epoch;
};

// Trains until `patience` consecutive epochs fail to improve the validation
// loss (or `max_epochs` is reached), then restores the best epoch.
PlateauResult run_plateau(const PlateauHooks& hooks, std::size_t patience, std::size_t max_epochs);

PlateauResult train_until_plateau(Trainer& trainer, std::span<const Sample> train, std::span<const Sample> val,
                                  std::size_t patience, std::size_t max_epochs,
                                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace sofuse
