#pragma once
// Checkpoint container. Little-endian binary: magic "SCVE", u32 version,
// u64 config hash, u64 step, u32 record count, then length-prefixed
// (name, rows, cols, float32 payload) records. float32 payloads round-trip
// the float32 training parameters bit-exactly.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "scve/model.hpp"
#include "scve/nn.hpp"

namespace scve {

struct Checkpoint {
  uint64_t config_hash = 0;
  uint64_t step = 0;
  struct Blob {
    int rows = 0;
    int cols = 0;
    std::vector<float> data;
  };
  std::map<std::string, Blob> blobs;

  void put(const std::string& name, const Tensor2<float>& t);
  const Blob& get(const std::string& name) const;
  void load_into(const std::string& name, Tensor2<float>& t) const;
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

// Parameter + optimizer snapshots, prefixed "ar."/"nar." and "opt.<...>".
void pack_model(Checkpoint& ckpt, const std::string& prefix,
                const ParamStore<float>& store, const Adam<float>* opt);
void unpack_model(const Checkpoint& ckpt, const std::string& prefix,
                  ParamStore<float>& store, Adam<float>* opt);

}  // namespace scve
