#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "scgseg/errors.hpp"
#include "scgseg/params.hpp"

namespace scgseg {

// Single-file checkpoint: an 8-byte magic, a length-prefixed JSON manifest
// (architecture hash, step, metric snapshot, tensor directory), then every
// parameter array as raw native-endian scalars in directory order. Raw bytes
// make save/load round-trips bitwise exact.
inline constexpr char kCheckpointMagic[8] = {'S', 'C', 'G', 'C',
                                             'K', 'P', 'T', '1'};

struct CheckpointInfo {
  std::uint64_t config_hash = 0;
  long long step = 0;
  std::map<std::string, double> metrics;
};

template <typename Scalar>
void save_checkpoint(const std::string& path, const ParamStore<Scalar>& store,
                     std::uint64_t config_hash, long long step,
                     const std::map<std::string, double>& metrics = {}) {
  nlohmann::json manifest;
  manifest["format"] = 1;
  manifest["scalar_bytes"] = sizeof(Scalar);
  manifest["config_hash"] = config_hash;
  manifest["step"] = step;
  manifest["metrics"] = metrics;
  auto& dir = manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& e : store.entries()) {
    nlohmann::json t;
    t["name"] = e.name;
    t["shape"] = e.value.shape;
    t["trainable"] = e.trainable;
    t["offset"] = offset;
    t["count"] = e.value.size();
    dir.push_back(std::move(t));
    offset += static_cast<std::uint64_t>(e.value.size()) * sizeof(Scalar);
  }
  const std::string mjson = manifest.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const std::uint64_t mlen = mjson.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mjson.data(), static_cast<std::streamsize>(mjson.size()));
  for (const auto& e : store.entries())
    out.write(reinterpret_cast<const char*>(e.value.data.data()),
              static_cast<std::streamsize>(e.value.size() * sizeof(Scalar)));
  if (!out) throw IoError("short write to checkpoint '" + path + "'");
}

// Loads parameter values into an already-built store of the same
// architecture. Any name or shape disagreement aborts before a single value
// is overwritten, with every mismatched entry listed.
template <typename Scalar>
CheckpointInfo load_checkpoint(const std::string& path,
                               ParamStore<Scalar>& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw IoError("'" + path + "' is not a checkpoint file");
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mjson(mlen, '\0');
  in.read(mjson.data(), static_cast<std::streamsize>(mlen));
  if (!in) throw IoError("truncated checkpoint manifest in '" + path + "'");
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(mjson);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt checkpoint manifest in '" + path + "': " +
                  e.what());
  }
  if (manifest.value("scalar_bytes", 0u) != sizeof(Scalar))
    throw ValidationError("checkpoint '" + path +
                          "' holds a different scalar width");

  std::vector<std::string> mismatches;
  const auto& dir = manifest.at("tensors");
  if (static_cast<int>(dir.size()) != store.count())
    mismatches.push_back("entry count: checkpoint has " +
                         std::to_string(dir.size()) + ", model has " +
                         std::to_string(store.count()));
  const int n = std::min<int>(static_cast<int>(dir.size()), store.count());
  for (int i = 0; i < n; ++i) {
    const std::string name = dir[i].at("name");
    const Shape shape = dir[i].at("shape").get<Shape>();
    const auto& e = store.entry(i);
    if (name != e.name)
      mismatches.push_back("slot " + std::to_string(i) + ": checkpoint '" +
                           name + "' vs model '" + e.name + "'");
    else if (shape != e.value.shape)
      mismatches.push_back(name + ": checkpoint shape " + shape_str(shape) +
                           " vs model shape " + shape_str(e.value.shape));
  }
  if (!mismatches.empty()) {
    std::string msg =
        "checkpoint '" + path + "' does not match the model architecture:";
    for (const auto& m : mismatches) msg += "\n  " + m;
    throw ValidationError(msg);
  }

  for (auto& e : store.entries()) {
    in.read(reinterpret_cast<char*>(e.value.data.data()),
            static_cast<std::streamsize>(e.value.size() * sizeof(Scalar)));
    if (!in) throw IoError("truncated checkpoint payload in '" + path + "'");
  }

  CheckpointInfo info;
  info.config_hash = manifest.value("config_hash", 0ull);
  info.step = manifest.value("step", 0ll);
  if (manifest.contains("metrics")) {
    const auto& m = manifest.at("metrics");
    for (auto it = m.begin(); it != m.end(); ++it)
      info.metrics[it.key()] = it.value().template get<double>();
  }
  return info;
}

}  // namespace scgseg
