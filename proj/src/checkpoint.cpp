#include "sofuse/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "sofuse/errors.hpp"

namespace sofuse {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string config_hash(const nlohmann::json& j) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

void write_doubles(std::ostream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

void read_doubles(std::istream& in, Tensor& t, const std::string& what) {
  in.read(reinterpret_cast<char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!in) throw DataError("checkpoint truncated while reading " + what);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const AdModel& model, const nlohmann::json& meta) {
  const nlohmann::json config = model.config().to_json();
  nlohmann::json params = nlohmann::json::array();
  for (const Parameter* p : model.parameters()) {
    params.push_back({{"name", p->name}, {"shape", p->value.shape()}, {"masked", p->mask.has_value()},
                      {"step_count", p->step_count}});
  }
  const nlohmann::json header{{"format", kCheckpointMagic},
                              {"config", config},
                              {"config_hash", config_hash(config)},
                              {"params", params},
                              {"meta", meta.is_null() ? nlohmann::json::object() : meta}};
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write checkpoint " + path.string());
    out << kCheckpointMagic << '\n' << text.size() << '\n' << text;
    for (const Parameter* p : model.parameters()) {
      write_doubles(out, p->value);
      if (p->mask) write_doubles(out, *p->mask);
      write_doubles(out, p->adam_m);
      write_doubles(out, p->adam_v);
    }
    if (!out) throw ConfigError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw ParseError(path.string() + " is not a SOFUSE1 checkpoint");
  std::string len_line;
  std::getline(in, len_line);
  std::size_t len = 0;
  try {
    len = std::stoul(len_line);
  } catch (const std::exception&) {
    throw ParseError("checkpoint header length is malformed");
  }
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("checkpoint header truncated");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint header: ") + e.what());
  }

  LoadedCheckpoint out{AdModel(ModelConfig::from_json(header.at("config"))), header.value("meta", nlohmann::json::object()),
                       header.value("config_hash", "")};
  auto params = out.model.parameters();
  const auto& table = header.at("params");
  if (table.size() != params.size()) throw DataError("checkpoint parameter table does not match its config");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    const auto& row = table[i];
    if (row.at("name").get<std::string>() != p.name || row.at("shape").get<Shape>() != p.value.shape()) {
      throw DataError("checkpoint parameter " + row.at("name").get<std::string>() + " does not match the model");
    }
    p.step_count = row.at("step_count").get<std::uint64_t>();
    read_doubles(in, p.value, p.name);
    if (row.at("masked").get<bool>()) {
      p.enable_mask();
      read_doubles(in, *p.mask, p.name + " mask");
    } else {
      p.mask.reset();
    }
    read_doubles(in, p.adam_m, p.name + " adam_m");
    read_doubles(in, p.adam_v, p.name + " adam_v");
  }
  return out;
}

void save_mask_snapshot(const std::filesystem::path& path, const AdModel& model, std::size_t round) {
  const Parameter* tensors[3] = {&model.fusion.conv1.w, &model.fusion.conv2.w, &model.fusion.head.w};
  nlohmann::json header{{"round", round}, {"tensors", nlohmann::json::array()}};
  for (const Parameter* p : tensors) header["tensors"].push_back({{"name", p->name}, {"size", p->size()}});
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write mask snapshot " + path.string());
  out << header.dump() << '\n';
  for (const Parameter* p : tensors) {
    std::vector<char> bytes((p->size() + 7) / 8, 0);
    for (std::size_t i = 0; i < p->size(); ++i) {
      if (p->is_active(i)) bytes[i / 8] = static_cast<char>(bytes[i / 8] | (1 << (i % 8)));
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw ConfigError("failed writing mask snapshot " + path.string());
}

MaskSnapshot load_mask_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open mask snapshot " + path.string());
  std::string line;
  std::getline(in, line);
  MaskSnapshot snap;
  try {
    const auto header = nlohmann::json::parse(line);
    snap.round = header.at("round").get<std::size_t>();
    for (const auto& t : header.at("tensors")) {
      snap.names.push_back(t.at("name").get<std::string>());
      snap.active.emplace_back(t.at("size").get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("mask snapshot " + path.string() + ": " + e.what());
  }
  for (auto& bits : snap.active) {
    std::vector<char> bytes((bits.size() + 7) / 8);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw DataError("mask snapshot " + path.string() + " is truncated");
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] = (bytes[i / 8] >> (i % 8)) & 1;
  }
  return snap;
}

}  // namespace sofuse
