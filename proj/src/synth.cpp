#include "sofuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "sofuse/errors.hpp"

namespace sofuse {

namespace {

int route_depth(ConnectionGroup g) {
  switch (g) {
    case ConnectionGroup::InputToPool: return 0;
    case ConnectionGroup::InputToConv1:
    case ConnectionGroup::InputToConv2:
    case ConnectionGroup::Conv1ToPool: return 1;
    case ConnectionGroup::Conv1ToConv2:
    case ConnectionGroup::Conv2ToPool: return 2;
  }
  return 0;
}

double phi(int depth, double u) {
  if (depth == 0) return u;
  const double once = u > 0.0 ? u : 0.0;
  if (depth == 1) return once;
  const double twice = once - 0.25;
  return twice > 0.0 ? twice : 0.0;
}

}  // namespace

PlantedSpec PlantedSpec::for_config(const ModelConfig& config, ConnectionGroup group) {
  PlantedSpec s;
  s.group = group;
  s.task = config.task;
  s.frames = config.frames;
  s.visual_in_dim = config.visual_in_dim;
  s.audio_in_dim = config.audio_in_dim;
  s.audio_frames = config.frames;
  return s;
}

nlohmann::json PlantedSpec::to_json() const {
  return {{"group", to_string(group)},
          {"active_coordinates", active_coordinates},
          {"noise", noise},
          {"base", base},
          {"amplitude", amplitude},
          {"frame_jitter", frame_jitter},
          {"task", to_string(task)},
          {"frames", frames},
          {"visual_in_dim", visual_in_dim},
          {"audio_in_dim", audio_in_dim},
          {"audio_frames", audio_frames}};
}

PlantedSpec PlantedSpec::from_json(const nlohmann::json& j) {
  PlantedSpec s;
  if (j.contains("group")) s.group = parse_group(j.at("group").get<std::string>());
  s.active_coordinates = j.value("active_coordinates", s.active_coordinates);
  s.noise = j.value("noise", s.noise);
  s.base = j.value("base", s.base);
  s.amplitude = j.value("amplitude", s.amplitude);
  s.frame_jitter = j.value("frame_jitter", s.frame_jitter);
  if (j.contains("task")) s.task = parse_task(j.at("task").get<std::string>());
  s.frames = j.value("frames", s.frames);
  s.visual_in_dim = j.value("visual_in_dim", s.visual_in_dim);
  s.audio_in_dim = j.value("audio_in_dim", s.audio_in_dim);
  s.audio_frames = j.value("audio_frames", s.audio_frames);
  return s;
}

nlohmann::json SyntheticDataset::topology_json(const PlantedSpec& spec, std::uint64_t seed) const {
  return {{"planted", spec.to_json()},
          {"seed", seed},
          {"active_coordinates", active_coordinates},
          {"coefficients", coefficients},
          {"noise_floor", noise_floor},
          {"n", records.size()}};
}

double planted_feature(const PlantedSpec& spec, const Tensor& visual, std::size_t column) {
  const int depth = route_depth(spec.group);
  const std::size_t cols = visual.dim(1);
  double best = phi(depth, visual[column]);
  for (std::size_t t = 1; t < visual.dim(0); ++t) best = std::max(best, phi(depth, visual[t * cols + column]));
  return best;
}

SyntheticDataset synth_generate(std::size_t n, const PlantedSpec& spec, std::uint64_t seed) {
  if (spec.active_coordinates == 0 || spec.active_coordinates > spec.visual_in_dim) {
    throw ConfigError("planted spec: active_coordinates must be in [1, visual_in_dim]");
  }
  if (spec.noise < 0.0) throw ConfigError("planted spec: noise must be non-negative");
  if (spec.frame_jitter < 0.0) throw ConfigError("planted spec: frame_jitter must be non-negative");
  if (spec.frames == 0 || spec.audio_frames == 0) throw ConfigError("planted spec: frame counts must be positive");

  std::mt19937_64 rng(seed);
  SyntheticDataset out;

  std::vector<std::size_t> columns(spec.visual_in_dim);
  for (std::size_t i = 0; i < columns.size(); ++i) columns[i] = i;
  seeded_shuffle(columns, rng());
  out.active_coordinates.assign(columns.begin(), columns.begin() + static_cast<std::ptrdiff_t>(spec.active_coordinates));

  std::uniform_real_distribution<double> magnitude(0.5, 1.0);
  std::bernoulli_distribution coin(0.5);
  double norm = 0.0;
  for (std::size_t j = 0; j < spec.active_coordinates; ++j) {
    const double a = magnitude(rng) * (coin(rng) ? 1.0 : -1.0);
    out.coefficients.push_back(a);
    norm += std::abs(a);
  }

  std::uniform_real_distribution<double> embedding(-1.0, 1.0);
  std::uniform_int_distribution<int> category(0, static_cast<int>(kCategoryCount) - 1);
  std::uniform_int_distribution<std::uint64_t> impressions(kImpressionThreshold, 1000000);
  std::normal_distribution<double> noise(0.0, 1.0);

  double noise_sq = 0.0;
  out.records.reserve(n);
  out.clean_labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    AdRecord r;
    char id[32];
    std::snprintf(id, sizeof id, "ad-%06zu", i);
    r.id = id;
    r.category = category(rng);
    r.visual_embeddings = Tensor({spec.frames, spec.visual_in_dim});
    std::vector<double> level(spec.visual_in_dim);
    for (double& l : level) l = embedding(rng);
    for (std::size_t t = 0; t < spec.frames; ++t) {
      for (std::size_t col = 0; col < spec.visual_in_dim; ++col) {
        r.visual_embeddings[t * spec.visual_in_dim + col] =
            std::clamp(level[col] + spec.frame_jitter * embedding(rng), -1.0, 1.0);
      }
    }
    r.audio_frames = Tensor({spec.audio_frames, spec.audio_in_dim});
    for (double& v : r.audio_frames.data()) v = embedding(rng);

    double z = 0.0;
    for (std::size_t j = 0; j < spec.active_coordinates; ++j) {
      z += out.coefficients[j] * planted_feature(spec, r.visual_embeddings, out.active_coordinates[j]);
    }
    const double clean = std::clamp(spec.base + spec.amplitude * z / norm, 0.0, 1.0);
    const double noisy = std::clamp(clean + spec.noise * noise(rng), 0.0, 1.0);
    r.impressions = impressions(rng);
    const auto events = static_cast<std::uint64_t>(std::llround(noisy * static_cast<double>(r.impressions)));
    r.clicks = events;
    r.plays_3s = events;

    const double label = compute_label(r, spec.task);
    noise_sq += (label - clean) * (label - clean);
    out.clean_labels.push_back(clean);
    out.records.push_back(std::move(r));
  }
  out.noise_floor = n ? noise_sq / static_cast<double>(n) : 0.0;
  return out;
}

}  // namespace sofuse
