#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "sofuse/data.hpp"
#include "sofuse/model.hpp"

namespace sofuse {

// Which fusion route carries the label signal, and how the label is formed.
//
// The label is base + amplitude * z / sum|a_j| + noise with
//   z = sum_j a_j * max_t phi(v[t, c_j])
// where c_j are the active visual coordinates and phi depends on how many
// nonlinear stages the planted route passes through before the pool:
//   input->pool                              phi(u) = u
//   input->conv2, input->conv1, conv1->pool  phi(u) = relu(u)
//   conv1->conv2, conv2->pool                phi(u) = relu(relu(u) - 0.25)
struct PlantedSpec {
  ConnectionGroup group = ConnectionGroup::InputToPool;
  std::size_t active_coordinates = 2;
  double noise = 0.02;
  double base = 0.5;
  double amplitude = 0.4;
  double frame_jitter = 0.25;  // per-frame spread around each record's column level
  Task task = Task::Ctr;
  std::size_t frames = 8;
  std::size_t visual_in_dim = 1280;
  std::size_t audio_in_dim = 128;
  std::size_t audio_frames = 8;

  static PlantedSpec for_config(const ModelConfig& config, ConnectionGroup group);
  nlohmann::json to_json() const;
  static PlantedSpec from_json(const nlohmann::json& j);
};

struct SyntheticDataset {
  std::vector<AdRecord> records;
  std::vector<std::size_t> active_coordinates;  // visual columns c_j
  std::vector<double> coefficients;             // a_j
  std::vector<double> clean_labels;             // before noise, clipped
  double noise_floor = 0.0;                     // mean squared label noise actually applied

  // Ground-truth sidecar contents.
  nlohmann::json topology_json(const PlantedSpec& spec, std::uint64_t seed) const;
};

// Per-coordinate route feature max_t phi(v[t, c]) used to form the label.
double planted_feature(const PlantedSpec& spec, const Tensor& visual, std::size_t column);

// Each record draws a level in [-1, 1] per visual column; frame t then reads
// level + frame_jitter * U[-1, 1], clipped to [-1, 1]. Frames of one ad are
// therefore correlated and the planted feature keeps most of the level's
// variance. Audio frames are i.i.d. uniform in [-1, 1]. The clean label stays
// inside [base - amplitude, base + amplitude].
SyntheticDataset synth_generate(std::size_t n, const PlantedSpec& spec, std::uint64_t seed);

}  // namespace sofuse
