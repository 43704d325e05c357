#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sofuse/autograd.hpp"
#include "sofuse/layers.hpp"

namespace sofuse {

struct AdRecord;

enum class Task { Ctr, Play3s };
enum class FusionKind { Baseline, AllConnected };
enum class HeadKind { Regression, Classification5 };

std::string to_string(Task t);
std::string to_string(FusionKind f);
std::string to_string(HeadKind h);
Task parse_task(const std::string& s);
FusionKind parse_fusion(const std::string& s);
HeadKind parse_head(const std::string& s);

inline constexpr std::size_t kCategoryCount = 19;
inline constexpr std::size_t kClassCount = 5;

struct ModelConfig {
  Task task = Task::Ctr;
  std::size_t frames = 8;
  std::size_t visual_in_dim = 1280;
  std::size_t audio_in_dim = 128;
  std::size_t embed_dim = 128;
  std::size_t category_count = kCategoryCount;
  FusionKind fusion = FusionKind::Baseline;
  std::size_t conv_kernel = 3;
  std::array<std::size_t, 2> conv_channels{128, 128};
  HeadKind head = HeadKind::Regression;
  std::uint64_t seed = 0;

  // Defaults for a task: 8 key frames for CTR, 3 frames (one per second of
  // the opening) for the 3-second play rate.
  static ModelConfig for_task(Task task);

  std::size_t fusion_in_dim() const { return 3 * embed_dim; }
  std::size_t head_dim() const { return head == HeadKind::Regression ? 1 : kClassCount; }
  void validate() const;

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Source -> destination groups of fusion connections. A connection is one
// scalar weight reading from a source activation into a receiving unit.
enum class ConnectionGroup { InputToConv1, InputToConv2, Conv1ToConv2, InputToPool, Conv1ToPool, Conv2ToPool };
inline constexpr std::array<ConnectionGroup, 6> kAllGroups{
    ConnectionGroup::InputToConv1, ConnectionGroup::InputToConv2, ConnectionGroup::Conv1ToConv2,
    ConnectionGroup::InputToPool,  ConnectionGroup::Conv1ToPool,  ConnectionGroup::Conv2ToPool};
std::string to_string(ConnectionGroup g);
ConnectionGroup parse_group(const std::string& s);
// Groups that exist only in the all-connected block.
bool is_cross_connection(ConnectionGroup g);

// A contiguous set of flat ranges of one weight tensor that belongs to one
// connection group. `layer` is the fusion layer order (conv1=0, conv2=1, head=2).
struct WeightSlice {
  ConnectionGroup group;
  const Parameter* param;
  std::size_t layer;
  std::vector<std::pair<std::size_t, std::size_t>> ranges;  // [begin, end)
  bool prunable;

  std::size_t size() const;
  std::size_t active_count() const;
};

// Two 1-D convs, max-pool over frames and a dense head. In the all-connected
// variant every layer also reads from all earlier outputs via channel
// concatenation: conv2 sees [x, c1] and the pool sees [x, c1, c2].
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(const ModelConfig& config, std::mt19937_64& rng);

  // x[T, 3*embed] -> head output [head_dim] (regression value or logits)
  Var forward(Tape& tape, Var x) const;

  FusionKind kind() const { return kind_; }
  std::size_t input_dim() const { return input_dim_; }

  Conv1DLayer conv1;
  Conv1DLayer conv2;
  DenseLayer head;

  std::vector<WeightSlice> slices() const;
  std::size_t parameter_count() const;
  std::size_t active_parameter_count() const;

 private:
  FusionKind kind_ = FusionKind::Baseline;
  std::size_t input_dim_ = 0;
};

// Full prediction network: per-modality encoders feeding the fusion block.
class AdModel {
 public:
  explicit AdModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  Var encode_visual(Tape& tape, Var frames) const;          // [T,Vin] -> [T,E]
  Var encode_audio(Tape& tape, Var audio_frames) const;     // [S,Ain] -> [E]
  Var encode_category(Tape& tape, int category_id) const;   // -> [E]
  Var assemble_frame_matrix(Var visual, Var audio, Var category) const;  // -> [T,3E]

  // Head output: [1] for regression, logits [5] for classification.
  Var forward(Tape& tape, const AdRecord& record) const;
  // Prediction: the regression value or the softmax class probabilities.
  Tensor predict(const AdRecord& record) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;

  std::size_t parameter_count() const;
  std::size_t fusion_parameter_count() const { return fusion.parameter_count(); }
  std::size_t fusion_active_parameter_count() const { return fusion.active_parameter_count(); }
  std::size_t prunable_count() const;
  std::size_t active_prunable_count() const;

  DenseLayer visual_encoder;
  DenseLayer audio_projection;
  LSTMLayer audio_lstm;
  SelfAttentionPooling audio_attention;
  DenseLayer category_encoder;
  FusionBlock fusion;

 private:
  ModelConfig config_;
};

// Fusion parameter count (weights + biases of conv1, conv2, head) for a given
// variant and channel widths, without building a model.
std::size_t fusion_parameter_count(const ModelConfig& config, FusionKind kind, std::size_t c1, std::size_t c2);
// Count of weights in the prunable region (conv1, conv2 and, for the
// all-connected block, head rows reading the cross-connected pool inputs).
std::size_t prunable_weight_count(const ModelConfig& config, FusionKind kind, std::size_t c1, std::size_t c2);

struct TrimResult {
  ModelConfig config;       // all-connected config with trimmed widths
  double retention = 1.0;   // largest fraction rho that fits the budget
  std::size_t parameter_count = 0;
};

// Shrink conv widths of the all-connected block uniformly (floor(rho * c)) so
// its fusion parameter count fits `budget`.
TrimResult trim_to_budget(const ModelConfig& config, std::size_t budget);

}  // namespace sofuse
