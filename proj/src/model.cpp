#include "sofuse/model.hpp"

#include <algorithm>
#include <numeric>

#include "sofuse/data.hpp"
#include "sofuse/errors.hpp"

namespace sofuse {

std::string to_string(Task t) { return t == Task::Ctr ? "ctr" : "play3s"; }
std::string to_string(FusionKind f) { return f == FusionKind::Baseline ? "baseline" : "all_connected"; }
std::string to_string(HeadKind h) { return h == HeadKind::Regression ? "regression" : "classification5"; }

Task parse_task(const std::string& s) {
  if (s == "ctr") return Task::Ctr;
  if (s == "play3s") return Task::Play3s;
  throw ConfigError("unknown task '" + s + "' (expected ctr or play3s)");
}

FusionKind parse_fusion(const std::string& s) {
  if (s == "baseline") return FusionKind::Baseline;
  if (s == "all_connected") return FusionKind::AllConnected;
  throw ConfigError("unknown fusion variant '" + s + "'");
}

HeadKind parse_head(const std::string& s) {
  if (s == "regression") return HeadKind::Regression;
  if (s == "classification5" || s == "classification") return HeadKind::Classification5;
  throw ConfigError("unknown head '" + s + "' (expected regression or classification5)");
}

std::string to_string(ConnectionGroup g) {
  switch (g) {
    case ConnectionGroup::InputToConv1: return "input->conv1";
    case ConnectionGroup::InputToConv2: return "input->conv2";
    case ConnectionGroup::Conv1ToConv2: return "conv1->conv2";
    case ConnectionGroup::InputToPool: return "input->pool";
    case ConnectionGroup::Conv1ToPool: return "conv1->pool";
    case ConnectionGroup::Conv2ToPool: return "conv2->pool";
  }
  return "?";
}

ConnectionGroup parse_group(const std::string& s) {
  for (ConnectionGroup g : kAllGroups) {
    if (to_string(g) == s) return g;
  }
  // Accept underscore spelling for command lines.
  for (ConnectionGroup g : kAllGroups) {
    std::string alt = to_string(g);
    alt.replace(alt.find("->"), 2, "_to_");
    if (alt == s) return g;
  }
  throw ConfigError("unknown connection group '" + s + "'");
}

bool is_cross_connection(ConnectionGroup g) {
  return g == ConnectionGroup::InputToConv2 || g == ConnectionGroup::InputToPool ||
         g == ConnectionGroup::Conv1ToPool;
}

// ---------------------------------------------------------------------------
// ModelConfig

ModelConfig ModelConfig::for_task(Task task) {
  ModelConfig c;
  c.task = task;
  c.frames = task == Task::Ctr ? 8 : 3;
  return c;
}

void ModelConfig::validate() const {
  if (frames == 0) throw ConfigError("frames must be positive");
  if (visual_in_dim == 0 || audio_in_dim == 0 || embed_dim == 0) throw ConfigError("dimensions must be positive");
  if (category_count == 0) throw ConfigError("category_count must be positive");
  if (conv_kernel % 2 == 0) throw ConfigError("conv_kernel must be odd, got " + std::to_string(conv_kernel));
  if (conv_channels[0] == 0 || conv_channels[1] == 0) throw ConfigError("conv channel widths must be positive");
}

nlohmann::json ModelConfig::to_json() const {
  return {{"task", to_string(task)},
          {"frames", frames},
          {"visual_in_dim", visual_in_dim},
          {"audio_in_dim", audio_in_dim},
          {"embed_dim", embed_dim},
          {"category_count", category_count},
          {"fusion", to_string(fusion)},
          {"conv_kernel", conv_kernel},
          {"conv_channels", {conv_channels[0], conv_channels[1]}},
          {"head", to_string(head)},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c = for_task(parse_task(j.value("task", std::string("ctr"))));
  c.frames = j.value("frames", c.frames);
  c.visual_in_dim = j.value("visual_in_dim", c.visual_in_dim);
  c.audio_in_dim = j.value("audio_in_dim", c.audio_in_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.category_count = j.value("category_count", c.category_count);
  if (j.contains("fusion")) c.fusion = parse_fusion(j.at("fusion").get<std::string>());
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  if (j.contains("conv_channels")) {
    const auto& ch = j.at("conv_channels");
    if (!ch.is_array() || ch.size() != 2) throw ConfigError("conv_channels must be a two-element array");
    c.conv_channels = {ch[0].get<std::size_t>(), ch[1].get<std::size_t>()};
  }
  if (j.contains("head")) c.head = parse_head(j.at("head").get<std::string>());
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// WeightSlice

std::size_t WeightSlice::size() const {
  std::size_t n = 0;
  for (auto [b, e] : ranges) n += e - b;
  return n;
}

std::size_t WeightSlice::active_count() const {
  std::size_t n = 0;
  for (auto [b, e] : ranges) {
    for (std::size_t i = b; i < e; ++i) n += param->is_active(i) ? 1 : 0;
  }
  return n;
}

// ---------------------------------------------------------------------------
// FusionBlock

FusionBlock::FusionBlock(const ModelConfig& config, std::mt19937_64& rng)
    : kind_(config.fusion), input_dim_(config.fusion_in_dim()) {
  const std::size_t k = config.conv_kernel;
  const auto [c1, c2] = config.conv_channels;
  const bool dense = kind_ == FusionKind::AllConnected;
  conv1 = Conv1DLayer("fusion.conv1", k, input_dim_, c1, rng);
  conv2 = Conv1DLayer("fusion.conv2", k, dense ? input_dim_ + c1 : c1, c2, rng);
  head = DenseLayer("fusion.head", dense ? input_dim_ + c1 + c2 : c2, config.head_dim(), Activation::None, rng);
  conv1.w.enable_mask();
  conv2.w.enable_mask();
  head.w.enable_mask();
}

Var FusionBlock::forward(Tape& tape, Var x) const {
  if (x.shape().size() != 2 || x.shape()[1] != input_dim_) {
    throw DimensionError("fusion input " + to_string(x.shape()) + " does not match [T," +
                         std::to_string(input_dim_) + "]");
  }
  Var c1 = conv1.forward(tape, x);
  if (kind_ == FusionKind::Baseline) {
    Var c2 = conv2.forward(tape, c1);
    return head.forward(tape, max_pool_time(c2));
  }
  Var c2 = conv2.forward(tape, concat({x, c1}, 1));
  Var pooled = max_pool_time(concat({x, c1, c2}, 1));
  return head.forward(tape, pooled);
}

std::vector<WeightSlice> FusionBlock::slices() const {
  std::vector<WeightSlice> out;
  const std::size_t d_in = input_dim_;
  const std::size_t c1 = conv1.out_channels();
  const std::size_t c2 = conv2.out_channels();
  const std::size_t k = conv1.kernel();
  const std::size_t head_out = head.out_features();

  out.push_back({ConnectionGroup::InputToConv1, &conv1.w, 0, {{0, conv1.w.size()}}, true});
  if (kind_ == FusionKind::Baseline) {
    out.push_back({ConnectionGroup::Conv1ToConv2, &conv2.w, 1, {{0, conv2.w.size()}}, true});
    out.push_back({ConnectionGroup::Conv2ToPool, &head.w, 2, {{0, head.w.size()}}, false});
    return out;
  }
  const std::size_t cin2 = d_in + c1;
  WeightSlice from_input{ConnectionGroup::InputToConv2, &conv2.w, 1, {}, true};
  WeightSlice from_conv1{ConnectionGroup::Conv1ToConv2, &conv2.w, 1, {}, true};
  for (std::size_t d = 0; d < k; ++d) {
    const std::size_t base = d * cin2 * c2;
    from_input.ranges.emplace_back(base, base + d_in * c2);
    from_conv1.ranges.emplace_back(base + d_in * c2, base + cin2 * c2);
  }
  out.push_back(std::move(from_input));
  out.push_back(std::move(from_conv1));
  out.push_back({ConnectionGroup::InputToPool, &head.w, 2, {{0, d_in * head_out}}, true});
  out.push_back({ConnectionGroup::Conv1ToPool, &head.w, 2, {{d_in * head_out, (d_in + c1) * head_out}}, true});
  out.push_back({ConnectionGroup::Conv2ToPool, &head.w, 2, {{(d_in + c1) * head_out, (d_in + c1 + c2) * head_out}}, false});
  return out;
}

std::size_t FusionBlock::parameter_count() const {
  return conv1.parameter_count() + conv2.parameter_count() + head.parameter_count();
}

std::size_t FusionBlock::active_parameter_count() const {
  return conv1.active_parameter_count() + conv2.active_parameter_count() + head.active_parameter_count();
}

// ---------------------------------------------------------------------------
// AdModel

AdModel::AdModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(config_.seed);
  const std::size_t e = config_.embed_dim;
  visual_encoder = DenseLayer("visual.fc", config_.visual_in_dim, e, Activation::None, rng);
  audio_projection = DenseLayer("audio.fc", config_.audio_in_dim, e, Activation::Tanh, rng);
  audio_lstm = LSTMLayer("audio.lstm", e, e, rng);
  audio_attention = SelfAttentionPooling("audio.attention", e, rng);
  category_encoder = DenseLayer("category.fc", config_.category_count, e, Activation::None, rng);
  fusion = FusionBlock(config_, rng);
}

Var AdModel::encode_visual(Tape& tape, Var frames) const {
  if (frames.shape().size() != 2 || frames.shape()[1] != config_.visual_in_dim) {
    throw DimensionError("visual modality: embeddings " + to_string(frames.shape()) + " do not match [T," +
                         std::to_string(config_.visual_in_dim) + "]");
  }
  return visual_encoder.forward(tape, frames);
}

Var AdModel::encode_audio(Tape& tape, Var audio_frames) const {
  if (audio_frames.shape().size() != 2 || audio_frames.shape()[1] != config_.audio_in_dim) {
    throw DimensionError("audio modality: frames " + to_string(audio_frames.shape()) + " do not match [S," +
                         std::to_string(config_.audio_in_dim) + "]");
  }
  if (audio_frames.shape()[0] == 0) throw EmptySequenceError("audio modality: no audio frames");
  Var projected = audio_projection.forward(tape, audio_frames);
  return audio_attention.forward(tape, audio_lstm.forward(tape, projected));
}

Var AdModel::encode_category(Tape& tape, int category_id) const {
  if (category_id < 0 || static_cast<std::size_t>(category_id) >= config_.category_count) {
    throw LabelError("category id " + std::to_string(category_id) + " outside [0," +
                     std::to_string(config_.category_count) + ")");
  }
  Tensor one_hot({config_.category_count});
  one_hot[static_cast<std::size_t>(category_id)] = 1.0;
  return category_encoder.forward(tape, tape.constant(std::move(one_hot)));
}

Var AdModel::assemble_frame_matrix(Var visual, Var audio, Var category) const {
  const Shape& vs = visual.shape();
  if (vs.size() != 2 || audio.shape().size() != 1 || category.shape().size() != 1 ||
      audio.shape()[0] != vs[1] || category.shape()[0] != vs[1]) {
    throw DimensionError("frame assembly: visual " + to_string(vs) + ", audio " + to_string(audio.shape()) +
                         ", category " + to_string(category.shape()) + " disagree");
  }
  const std::size_t frames = vs[0];
  return concat({visual, repeat_rows(audio, frames), repeat_rows(category, frames)}, 1);
}

Var AdModel::forward(Tape& tape, const AdRecord& record) const {
  if (record.visual_embeddings.shape().size() != 2 || record.visual_embeddings.dim(0) != config_.frames) {
    throw DimensionError("visual modality: record '" + record.id + "' has " +
                         to_string(record.visual_embeddings.shape()) + " embeddings, expected " +
                         std::to_string(config_.frames) + " frames");
  }
  Var visual = encode_visual(tape, tape.constant(record.visual_embeddings));
  Var audio = encode_audio(tape, tape.constant(record.audio_frames));
  Var category = encode_category(tape, record.category);
  return fusion.forward(tape, assemble_frame_matrix(visual, audio, category));
}

Tensor AdModel::predict(const AdRecord& record) const {
  Tape tape(false);
  Var out = forward(tape, record);
  if (config_.head == HeadKind::Regression) return out.value();
  return softmax(out).value();
}

std::vector<Parameter*> AdModel::parameters() {
  return {&visual_encoder.w, &visual_encoder.b, &audio_projection.w, &audio_projection.b,
          &audio_lstm.w,     &audio_lstm.u,     &audio_lstm.bias,    &audio_attention.query,
          &audio_attention.key, &category_encoder.w, &category_encoder.b, &fusion.conv1.w,
          &fusion.conv1.b,   &fusion.conv2.w,   &fusion.conv2.b,     &fusion.head.w,
          &fusion.head.b};
}

std::vector<const Parameter*> AdModel::parameters() const {
  auto mut = const_cast<AdModel*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::size_t AdModel::parameter_count() const {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->size();
  return n;
}

std::size_t AdModel::prunable_count() const {
  std::size_t n = 0;
  for (const WeightSlice& s : fusion.slices()) n += s.prunable ? s.size() : 0;
  return n;
}

std::size_t AdModel::active_prunable_count() const {
  std::size_t n = 0;
  for (const WeightSlice& s : fusion.slices()) n += s.prunable ? s.active_count() : 0;
  return n;
}

// ---------------------------------------------------------------------------
// Counting and trimming

std::size_t fusion_parameter_count(const ModelConfig& config, FusionKind kind, std::size_t c1, std::size_t c2) {
  const std::size_t k = config.conv_kernel;
  const std::size_t d = config.fusion_in_dim();
  const std::size_t out = config.head_dim();
  const bool dense = kind == FusionKind::AllConnected;
  const std::size_t conv1 = k * d * c1 + c1;
  const std::size_t conv2 = k * (dense ? d + c1 : c1) * c2 + c2;
  const std::size_t head = (dense ? d + c1 + c2 : c2) * out + out;
  return conv1 + conv2 + head;
}

std::size_t prunable_weight_count(const ModelConfig& config, FusionKind kind, std::size_t c1, std::size_t c2) {
  const std::size_t k = config.conv_kernel;
  const std::size_t d = config.fusion_in_dim();
  const std::size_t out = config.head_dim();
  if (kind == FusionKind::Baseline) return k * d * c1 + k * c1 * c2;
  return k * d * c1 + k * (d + c1) * c2 + (d + c1) * out;
}

TrimResult trim_to_budget(const ModelConfig& config, std::size_t budget) {
  const auto [c1, c2] = config.conv_channels;
  const auto count_at = [&](std::size_t w1, std::size_t w2) {
    return fusion_parameter_count(config, FusionKind::AllConnected, w1, w2);
  };
  if (count_at(1, 1) > budget) {
    throw InfeasibleError("budget " + std::to_string(budget) + " is below the one-kernel all-connected model (" +
                          std::to_string(count_at(1, 1)) + " parameters)");
  }
  // Candidate retention fractions are the breakpoints j/c1 and j/c2 where a
  // floored width changes. Kept as exact rationals to avoid rounding drift.
  struct Rational {
    std::size_t num, den;
  };
  std::vector<Rational> candidates;
  for (std::size_t j = 1; j <= c1; ++j) candidates.push_back({j, c1});
  for (std::size_t j = 1; j <= c2; ++j) candidates.push_back({j, c2});
  std::sort(candidates.begin(), candidates.end(),
            [](Rational a, Rational b) { return a.num * b.den > b.num * a.den; });
  for (Rational r : candidates) {
    const std::size_t w1 = c1 * r.num / r.den;
    const std::size_t w2 = c2 * r.num / r.den;
    if (w1 == 0 || w2 == 0) continue;
    const std::size_t n = count_at(w1, w2);
    if (n <= budget) {
      TrimResult result;
      result.config = config;
      result.config.fusion = FusionKind::AllConnected;
      result.config.conv_channels = {w1, w2};
      result.retention = static_cast<double>(r.num) / static_cast<double>(r.den);
      result.parameter_count = n;
      return result;
    }
  }
  // Unreachable: (1,1) fits, and some candidate yields widths >= 1.
  TrimResult fallback;
  fallback.config = config;
  fallback.config.fusion = FusionKind::AllConnected;
  fallback.config.conv_channels = {1, 1};
  fallback.retention = 1.0 / static_cast<double>(std::max(c1, c2));
  fallback.parameter_count = count_at(1, 1);
  return fallback;
}

}  // namespace sofuse
