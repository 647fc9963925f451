// SPDX-License-Identifier: Apache-2.0
#include "lusifer/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>

namespace lusifer {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

constexpr const char* kManifestName = "manifest.json";
constexpr const char* kPayloadName = "params.bin";
constexpr const char* kFormat = "lusifer-checkpoint-v1";

void append_f32_le(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, sizeof(bits));
  out.push_back(static_cast<char>(bits & 0xff));
  out.push_back(static_cast<char>((bits >> 8) & 0xff));
  out.push_back(static_cast<char>((bits >> 16) & 0xff));
  out.push_back(static_cast<char>((bits >> 24) & 0xff));
}

float read_f32_le(const unsigned char* p) {
  std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                       (static_cast<std::uint32_t>(p[2]) << 16) |
                       (static_cast<std::uint32_t>(p[3]) << 24);
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

void save_checkpoint(const std::string& dir, const ParamSet& params, const CheckpointMeta& meta) {
  fs::create_directories(dir);
  std::string payload;
  json tensors = json::array();
  for (const auto& p : params.items()) {
    json t;
    t["name"] = p->name;
    t["shape"] = p->value.shape;
    t["dtype"] = "f32";
    t["offset"] = payload.size();
    t["nbytes"] = p->value.numel() * 4;
    tensors.push_back(std::move(t));
    for (double x : p->value.data) append_f32_le(payload, static_cast<float>(x));
  }
  json manifest;
  manifest["format"] = kFormat;
  manifest["stage"] = meta.stage;
  manifest["final"] = meta.final_stage;
  manifest["seed"] = meta.seed;
  manifest["config"] = meta.config;
  manifest["tensors"] = std::move(tensors);
  manifest["payload_bytes"] = payload.size();
  manifest["payload_fnv1a64"] = hex64(fnv1a64(payload.data(), payload.size()));

  {
    std::ofstream out(fs::path(dir) / kPayloadName, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint payload in " + dir);
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  {
    std::ofstream out(fs::path(dir) / kManifestName);
    if (!out) throw DataError("cannot write checkpoint manifest in " + dir);
    out << manifest.dump(2) << "\n";
  }
}

namespace {

json read_manifest(const std::string& dir) {
  std::ifstream in(fs::path(dir) / kManifestName);
  if (!in) throw DataError("checkpoint manifest not found in " + dir);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("corrupted checkpoint manifest in " + dir + ": " + e.what());
  }
  if (manifest.value("format", "") != kFormat) {
    throw DataError("unrecognized checkpoint format in " + dir);
  }
  return manifest;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::string& dir) {
  json manifest = read_manifest(dir);
  CheckpointMeta meta;
  meta.stage = manifest.at("stage").get<std::string>();
  meta.final_stage = manifest.at("final").get<bool>();
  meta.seed = manifest.at("seed").get<std::uint64_t>();
  meta.config = manifest.at("config").get<std::map<std::string, std::string>>();
  return meta;
}

void load_checkpoint_params(const std::string& dir, ParamSet& into) {
  json manifest = read_manifest(dir);

  std::string payload;
  {
    std::ifstream in(fs::path(dir) / kPayloadName, std::ios::binary);
    if (!in) throw DataError("checkpoint payload not found in " + dir);
    std::ostringstream buf;
    buf << in.rdbuf();
    payload = buf.str();
  }
  const std::size_t expect_bytes = manifest.at("payload_bytes").get<std::size_t>();
  if (payload.size() != expect_bytes) {
    throw DataError("checkpoint payload in " + dir + " is truncated: " +
                    std::to_string(payload.size()) + " bytes, manifest says " +
                    std::to_string(expect_bytes));
  }
  const std::string expect_hash = manifest.at("payload_fnv1a64").get<std::string>();
  if (hex64(fnv1a64(payload.data(), payload.size())) != expect_hash) {
    throw DataError("checkpoint payload hash mismatch in " + dir);
  }

  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != into.size()) {
    throw DataError("checkpoint in " + dir + " holds " + std::to_string(tensors.size()) +
                    " tensors but the model has " + std::to_string(into.size()) + " parameters");
  }
  // validate everything before the first mutation
  struct Pending {
    Param* param;
    std::size_t offset;
  };
  std::vector<Pending> pending;
  std::set<std::string> seen;
  for (const auto& t : tensors) {
    const std::string name = t.at("name").get<std::string>();
    if (!seen.insert(name).second) throw DataError("duplicate tensor " + name + " in checkpoint");
    Param* p = into.find(name);
    if (!p) throw DataError("checkpoint tensor " + name + " has no matching model parameter");
    const auto shape = t.at("shape").get<std::vector<int>>();
    if (shape != p->value.shape) {
      throw DataError("checkpoint tensor " + name + " shape " + shape_to_string(shape) +
                      " does not match parameter shape " + p->value.shape_str());
    }
    const std::size_t offset = t.at("offset").get<std::size_t>();
    const std::size_t nbytes = t.at("nbytes").get<std::size_t>();
    if (nbytes != p->value.numel() * 4 || offset + nbytes > payload.size()) {
      throw DataError("checkpoint tensor " + name + " has inconsistent byte range");
    }
    pending.push_back({p, offset});
  }
  for (const auto& [param, offset] : pending) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(payload.data()) + offset;
    for (std::size_t i = 0; i < param->value.data.size(); ++i) {
      param->value.data[i] = static_cast<double>(read_f32_le(bytes + i * 4));
    }
  }
}

}  // namespace lusifer
