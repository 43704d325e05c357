#include "sofuse/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "sofuse/errors.hpp"

namespace sofuse {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::vector<Sample> make_samples(const std::vector<AdRecord>& records, Task task, HeadKind head,
                                 const BinEdges* edges) {
  if (head == HeadKind::Classification5 && !edges) {
    throw ConfigError("classification head needs bin edges");
  }
  std::vector<Sample> out;
  out.reserve(records.size());
  for (const AdRecord& r : records) {
    Sample s;
    s.record = &r;
    s.target = compute_label(r, task);
    if (edges) s.target_class = bin_of(s.target, *edges);
    out.push_back(s);
  }
  return out;
}

std::size_t eval_threads_from_env() {
  const char* v = std::getenv("SOFUSE_THREADS");
  if (!v || !*v) return 1;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || n < 1) return 1;
  return static_cast<std::size_t>(n);
}

ModelState snapshot(const AdModel& model) {
  ModelState s;
  for (const Parameter* p : model.parameters()) s.params.push_back(*p);
  return s;
}

void restore(AdModel& model, const ModelState& state) {
  auto params = model.parameters();
  if (params.size() != state.params.size()) throw ContractError("snapshot does not match model");
  for (std::size_t i = 0; i < params.size(); ++i) *params[i] = state.params[i];
}

// ---------------------------------------------------------------------------

Trainer::Trainer(AdModel& model, TrainOptions options)
    : model_(model), options_(options), adam_(options.adam) {
  if (options_.batch_size == 0) throw ConfigError("batch size must be positive");
  options_.eval_threads = std::max<std::size_t>(1, options_.eval_threads);
}

double Trainer::accumulate_batch(std::span<const Sample* const> batch) {
  Tape tape;
  std::vector<Var> outputs;
  outputs.reserve(batch.size());
  for (const Sample* s : batch) outputs.push_back(model_.forward(tape, *s->record));
  Var stacked = concat(outputs, 0);
  Var loss;
  if (model_.config().head == HeadKind::Regression) {
    Tensor targets({batch.size()});
    for (std::size_t i = 0; i < batch.size(); ++i) targets[i] = batch[i]->target;
    loss = mse_loss(stacked, targets);
  } else {
    std::vector<int> classes;
    for (const Sample* s : batch) classes.push_back(s->target_class);
    loss = cross_entropy_loss(reshape(stacked, {batch.size(), kClassCount}), classes);
  }
  tape.backward(loss);
  return loss.value()[0];
}

double Trainer::train_epoch(std::span<const Sample> train) {
  if (train.empty()) throw DataError("training set is empty");
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, splitmix64(options_.shuffle_seed ^ splitmix64(epochs_completed_)));

  auto params = model_.parameters();
  double weighted = 0.0;
  std::vector<const Sample*> batch;
  for (std::size_t start = 0; start < order.size(); start += options_.batch_size) {
    const std::size_t end = std::min(order.size(), start + options_.batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(&train[order[i]]);
    for (Parameter* p : params) p->zero_grad();
    weighted += accumulate_batch(batch) * static_cast<double>(batch.size());
    adam_.step(params);
  }
  ++epochs_completed_;
  return weighted / static_cast<double>(train.size());
}

std::vector<Tensor> Trainer::head_outputs(std::span<const Sample> data) const {
  std::vector<Tensor> out(data.size());
  const std::size_t threads = std::min(options_.eval_threads, std::max<std::size_t>(1, data.size()));
  const auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Tape tape(false);
      out[i] = model_.forward(tape, *data[i].record).value();
    }
  };
  if (threads <= 1) {
    work(0, data.size());
    return out;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (data.size() + threads - 1) / threads;
  for (std::size_t t = 0; t < threads; ++t) {
    const std::size_t begin = t * chunk;
    const std::size_t end = std::min(data.size(), begin + chunk);
    if (begin >= end) break;
    pool.emplace_back(work, begin, end);
  }
  for (auto& th : pool) th.join();
  return out;
}

double sample_loss(HeadKind head, const Tensor& out, const Sample& s) {
  if (head == HeadKind::Regression) {
    const double d = out[0] - s.target;
    return d * d;
  }
  const double mx = *std::max_element(out.data().begin(), out.data().end());
  double z = 0.0;
  for (double v : out.data()) z += std::exp(v - mx);
  return mx + std::log(z) - out[static_cast<std::size_t>(s.target_class)];
}

double Trainer::evaluate_loss(std::span<const Sample> data) const {
  if (data.empty()) throw DataError("evaluation set is empty");
  const auto outputs = head_outputs(data);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) total += sample_loss(model_.config().head, outputs[i], data[i]);
  return total / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------

PlateauResult run_plateau(const PlateauHooks& hooks, std::size_t patience, std::size_t max_epochs) {
  if (patience == 0) throw ConfigError("plateau patience must be positive");
  if (max_epochs == 0) throw ConfigError("plateau max_epochs must be positive");
  PlateauResult result;
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= max_epochs; ++epoch) {
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = hooks.train_epoch();
    rec.val_loss = hooks.validate();
    result.history.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (result.best_epoch == 0 || rec.val_loss < result.best_val_loss) {
      result.best_epoch = epoch;
      result.best_val_loss = rec.val_loss;
      stale = 0;
      hooks.snapshot();
    } else if (++stale >= patience) {
      break;
    }
    if (epoch == max_epochs) result.hit_max_epochs = true;
  }
  hooks.restore();
  return result;
}

PlateauResult train_until_plateau(Trainer& trainer, std::span<const Sample> train, std::span<const Sample> val,
                                  std::size_t patience, std::size_t max_epochs,
                                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train.empty()) throw DataError("training set is empty");
  if (val.empty()) throw DataError("validation set is empty");
  ModelState best;
  PlateauHooks hooks;
  hooks.train_epoch = [&] { return trainer.train_epoch(train); };
  hooks.validate = [&] { return trainer.evaluate_loss(val); };
  hooks.snapshot = [&] { best = snapshot(trainer.model()); };
  hooks.restore = [&] { restore(trainer.model(), best); };
  hooks.on_epoch = on_epoch;
  return run_plateau(hooks, patience, max_epochs);
}

}  // namespace sofuse
