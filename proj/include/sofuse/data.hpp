#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sofuse/model.hpp"
#include "sofuse/tensor.hpp"

namespace sofuse {

// One advertisement: raw engagement counts plus precomputed embeddings.
struct AdRecord {
  std::string id;
  int category = 0;
  std::uint64_t impressions = 0;
  std::uint64_t clicks = 0;
  std::uint64_t plays_3s = 0;
  Tensor visual_embeddings;  // [T, visual_in_dim]
  Tensor audio_frames;       // [S, audio_in_dim]

  friend bool operator==(const AdRecord&, const AdRecord&) = default;
};

inline constexpr const char* kDatasetSchema = "ADREC1";
inline constexpr std::uint64_t kImpressionThreshold = 70000;

struct DatasetHeader {
  Task task = Task::Ctr;
  std::size_t frames = 8;
  std::size_t visual_in_dim = 1280;
  std::size_t audio_in_dim = 128;
  std::string source_hash;  // hash of the generating config, written when set
};

DatasetHeader header_for(const ModelConfig& config);

// Line-delimited JSON: a header object then one record object per line.
void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   const std::vector<AdRecord>& records);
std::string dataset_to_string(const DatasetHeader& header, const std::vector<AdRecord>& records);

// Parses and validates every record against `config`. An empty file is an
// empty dataset. Errors carry the line number and the record id.
std::vector<AdRecord> load_dataset(const std::filesystem::path& path, Task task, const ModelConfig& config);
std::vector<AdRecord> parse_dataset(std::istream& in, Task task, const ModelConfig& config);

void validate_record(const AdRecord& record, const ModelConfig& config);

// Keeps records with impressions >= threshold, preserving order.
std::vector<AdRecord> filter_impressions(const std::vector<AdRecord>& records,
                                         std::uint64_t threshold = kImpressionThreshold);

// clicks / impressions (CTR) or plays_3s / impressions (3-second play rate).
double compute_label(const AdRecord& record, Task task);

// Four strictly increasing cut points splitting training labels into five
// equally populated classes.
struct BinEdges {
  std::array<double, 4> edges{};
};

BinEdges quantile_bins(std::vector<double> training_labels);
// Half-open [e_{i-1}, e_i); the last class is closed above.
int bin_of(double label, const BinEdges& edges);

void write_bin_edges(const std::filesystem::path& path, const BinEdges& edges);
BinEdges read_bin_edges(const std::filesystem::path& path);

struct SplitSpec {
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  std::uint64_t seed = 0;
};

struct Partition {
  std::vector<std::size_t> train, val, test;  // indices into the input
};

// Seeded shuffle, then contiguous cuts at ratios[0] and ratios[0]+ratios[1].
Partition split_indices(std::size_t n, const SplitSpec& spec);

template <typename T>
std::vector<T> gather(const std::vector<T>& items, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(items[i]);
  return out;
}

// Deterministic Fisher-Yates with a portable bounded draw.
void seeded_shuffle(std::vector<std::size_t>& v, std::uint64_t seed);

}  // namespace sofuse
