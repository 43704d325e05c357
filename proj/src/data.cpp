#include "sofuse/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <json.hpp>

#include "sofuse/errors.hpp"

namespace sofuse {

using nlohmann::json;

namespace {

json matrix_to_json(const Tensor& t) {
  json rows = json::array();
  const std::size_t r = t.dim(0), c = t.dim(1);
  for (std::size_t i = 0; i < r; ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < c; ++j) row.push_back(t.at(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Tensor matrix_from_json(const json& j, const std::string& field, const std::string& id) {
  if (!j.is_array()) throw ParseError("record '" + id + "': " + field + " is not an array of rows");
  const std::size_t rows = j.size();
  const std::size_t cols = rows ? j[0].size() : 0;
  std::vector<double> data;
  data.reserve(rows * cols);
  for (const json& row : j) {
    if (!row.is_array() || row.size() != cols) {
      throw DimensionError("record '" + id + "': " + field + " rows have unequal length");
    }
    for (const json& v : row) {
      if (!v.is_number()) throw ParseError("record '" + id + "': " + field + " holds a non-numeric entry");
      data.push_back(v.get<double>());
    }
  }
  return Tensor({rows, cols}, std::move(data));
}

json record_to_json(const AdRecord& r) {
  return {{"id", r.id},
          {"category", r.category},
          {"impressions", r.impressions},
          {"clicks", r.clicks},
          {"plays_3s", r.plays_3s},
          {"visual_embeddings", matrix_to_json(r.visual_embeddings)},
          {"audio_frames", matrix_to_json(r.audio_frames)}};
}

template <typename T>
T required(const json& j, const char* key, const std::string& id) {
  if (!j.contains(key)) throw ParseError("record '" + id + "': missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ParseError("record '" + id + "': field '" + key + "' has the wrong type");
  }
}

AdRecord record_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("record is not an object");
  AdRecord r;
  r.id = j.contains("id") && j["id"].is_string() ? j["id"].get<std::string>() : std::string("<missing id>");
  if (!j.contains("id")) throw ParseError("record without an 'id' field");
  r.category = required<int>(j, "category", r.id);
  for (const char* key : {"impressions", "clicks", "plays_3s"}) {
    if (!j.contains(key) || !j[key].is_number_integer() || j[key].get<long long>() < 0) {
      throw ParseError("record '" + r.id + "': field '" + key + "' must be a non-negative integer");
    }
  }
  r.impressions = j["impressions"].get<std::uint64_t>();
  r.clicks = j["clicks"].get<std::uint64_t>();
  r.plays_3s = j["plays_3s"].get<std::uint64_t>();
  if (!j.contains("visual_embeddings")) throw ParseError("record '" + r.id + "': missing field 'visual_embeddings'");
  if (!j.contains("audio_frames")) throw ParseError("record '" + r.id + "': missing field 'audio_frames'");
  r.visual_embeddings = matrix_from_json(j["visual_embeddings"], "visual_embeddings", r.id);
  r.audio_frames = matrix_from_json(j["audio_frames"], "audio_frames", r.id);
  return r;
}

}  // namespace

DatasetHeader header_for(const ModelConfig& config) {
  return {config.task, config.frames, config.visual_in_dim, config.audio_in_dim, {}};
}

std::string dataset_to_string(const DatasetHeader& header, const std::vector<AdRecord>& records) {
  std::ostringstream out;
  json head{{"schema", kDatasetSchema},
            {"task", to_string(header.task)},
            {"frames", header.frames},
            {"visual_in_dim", header.visual_in_dim},
            {"audio_in_dim", header.audio_in_dim}};
  if (!header.source_hash.empty()) head["source_hash"] = header.source_hash;
  out << head.dump() << '\n';
  for (const AdRecord& r : records) out << record_to_json(r).dump() << '\n';
  return out.str();
}

void write_dataset(const std::filesystem::path& path, const DatasetHeader& header,
                   const std::vector<AdRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write dataset to " + path.string());
  out << dataset_to_string(header, records);
  if (!out) throw ConfigError("failed writing dataset to " + path.string());
}

void validate_record(const AdRecord& r, const ModelConfig& config) {
  if (r.category < 0 || static_cast<std::size_t>(r.category) >= config.category_count) {
    throw LabelError("record '" + r.id + "': category " + std::to_string(r.category) + " outside [0," +
                     std::to_string(config.category_count) + ")");
  }
  if (r.clicks > r.impressions) {
    throw DataError("record '" + r.id + "': clicks " + std::to_string(r.clicks) + " exceed impressions " +
                    std::to_string(r.impressions));
  }
  if (r.plays_3s > r.impressions) {
    throw DataError("record '" + r.id + "': plays_3s " + std::to_string(r.plays_3s) + " exceed impressions " +
                    std::to_string(r.impressions));
  }
  const Shape want_visual{config.frames, config.visual_in_dim};
  if (r.visual_embeddings.shape() != want_visual) {
    throw DimensionError("record '" + r.id + "': visual embeddings " + to_string(r.visual_embeddings.shape()) +
                         ", expected " + to_string(want_visual));
  }
  if (r.audio_frames.rank() != 2 || r.audio_frames.dim(1) != config.audio_in_dim || r.audio_frames.dim(0) == 0) {
    throw DimensionError("record '" + r.id + "': audio frames " + to_string(r.audio_frames.shape()) +
                         ", expected [S>=1," + std::to_string(config.audio_in_dim) + "]");
  }
}

std::vector<AdRecord> parse_dataset(std::istream& in, Task task, const ModelConfig& config) {
  std::vector<AdRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen_header) {
      seen_header = true;
      if (!j.is_object() || j.value("schema", std::string()) != kDatasetSchema) {
        throw ParseError("line " + std::to_string(line_no) + ": missing " + std::string(kDatasetSchema) + " header");
      }
      const std::string file_task = j.value("task", std::string());
      if (file_task != to_string(task)) {
        throw DataError("dataset task '" + file_task + "' does not match requested task '" + to_string(task) + "'");
      }
      const std::size_t frames = j.value("frames", std::size_t{0});
      const std::size_t vdim = j.value("visual_in_dim", std::size_t{0});
      const std::size_t adim = j.value("audio_in_dim", std::size_t{0});
      if (frames != config.frames || vdim != config.visual_in_dim || adim != config.audio_in_dim) {
        throw DimensionError("dataset dims (frames " + std::to_string(frames) + ", visual " + std::to_string(vdim) +
                             ", audio " + std::to_string(adim) + ") do not match config (frames " +
                             std::to_string(config.frames) + ", visual " + std::to_string(config.visual_in_dim) +
                             ", audio " + std::to_string(config.audio_in_dim) + ")");
      }
      continue;
    }
    try {
      AdRecord r = record_from_json(j);
      validate_record(r, config);
      records.push_back(std::move(r));
    } catch (const Error& e) {
      const std::string prefix = "line " + std::to_string(line_no) + ": ";
      switch (e.kind()) {
        case ErrorKind::Data: throw DataError(prefix + e.what());
        default: throw;
      }
    }
  }
  return records;
}

std::vector<AdRecord> load_dataset(const std::filesystem::path& path, Task task, const ModelConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return parse_dataset(in, task, config);
}

std::vector<AdRecord> filter_impressions(const std::vector<AdRecord>& records, std::uint64_t threshold) {
  std::vector<AdRecord> kept;
  std::copy_if(records.begin(), records.end(), std::back_inserter(kept),
               [threshold](const AdRecord& r) { return r.impressions >= threshold; });
  return kept;
}

double compute_label(const AdRecord& r, Task task) {
  if (r.impressions == 0) throw DataError("record '" + r.id + "': label undefined with zero impressions");
  const std::uint64_t events = task == Task::Ctr ? r.clicks : r.plays_3s;
  return static_cast<double>(events) / static_cast<double>(r.impressions);
}

// ---------------------------------------------------------------------------

BinEdges quantile_bins(std::vector<double> labels) {
  std::sort(labels.begin(), labels.end());
  std::vector<double> uniq = labels;
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.size() < kClassCount) {
    throw DataError("degenerate label distribution: " + std::to_string(uniq.size()) +
                    " distinct training labels, need at least 5");
  }
  const std::size_t n = labels.size();
  BinEdges result;
  for (std::size_t i = 1; i <= 4; ++i) {
    const std::size_t m = i * n / kClassCount;
    result.edges[i - 1] = 0.5 * (labels[m - 1] + labels[m]);
  }
  for (std::size_t i = 1; i < 4; ++i) {
    if (!(result.edges[i] > result.edges[i - 1])) {
      throw DataError("degenerate label distribution: quantile edges are not strictly increasing");
    }
  }
  return result;
}

int bin_of(double label, const BinEdges& e) {
  int cls = 0;
  for (double edge : e.edges) cls += label >= edge ? 1 : 0;
  return cls;
}

void write_bin_edges(const std::filesystem::path& path, const BinEdges& e) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write bin edges to " + path.string());
  out << json{{"edges", e.edges}}.dump() << '\n';
}

BinEdges read_bin_edges(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing bin-edge sidecar " + path.string());
  BinEdges e;
  try {
    const json j = json::parse(in);
    const json& edges = j.at("edges");
    if (!edges.is_array() || edges.size() != 4) throw ParseError("expected four edges");
    for (std::size_t i = 0; i < 4; ++i) e.edges[i] = edges[i].get<double>();
  } catch (const json::exception& ex) {
    throw ParseError("bin-edge sidecar " + path.string() + ": " + ex.what());
  } catch (const ParseError& ex) {
    throw ParseError("bin-edge sidecar " + path.string() + ": " + ex.what());
  }
  return e;
}

// ---------------------------------------------------------------------------

void seeded_shuffle(std::vector<std::size_t>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::uint64_t range = i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t draw;
    do {
      draw = rng();
    } while (draw >= limit);
    std::swap(v[i - 1], v[draw % range]);
  }
}

Partition split_indices(std::size_t n, const SplitSpec& spec) {
  if (n < 10) throw DataError("split needs at least 10 records, got " + std::to_string(n));
  const double total = spec.ratios[0] + spec.ratios[1] + spec.ratios[2];
  if (std::abs(total - 1.0) > 1e-9 || spec.ratios[0] <= 0 || spec.ratios[1] < 0 || spec.ratios[2] < 0) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  seeded_shuffle(order, spec.seed);
  const auto cut_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * spec.ratios[0]));
  const auto cut_val =
      static_cast<std::size_t>(std::llround(static_cast<double>(n) * (spec.ratios[0] + spec.ratios[1])));
  Partition p;
  p.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(cut_train));
  p.val.assign(order.begin() + static_cast<std::ptrdiff_t>(cut_train),
               order.begin() + static_cast<std::ptrdiff_t>(std::min(cut_val, n)));
  p.test.assign(order.begin() + static_cast<std::ptrdiff_t>(std::min(cut_val, n)), order.end());
  return p;
}

}  // namespace sofuse
