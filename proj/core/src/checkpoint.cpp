#include "scve/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace scve {

namespace {

constexpr uint32_t kVersion = 1;

template <class T>
void put_raw(std::ofstream& f, T v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get_raw(std::ifstream& f, const std::string& path) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw_data("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void Checkpoint::put(const std::string& name, const Tensor2<float>& t) {
  Blob b;
  b.rows = t.rows;
  b.cols = t.cols;
  b.data.assign(t.v.begin(), t.v.end());
  if (!blobs.emplace(name, std::move(b)).second)
    throw_data("duplicate checkpoint blob: " + name);
}

const Checkpoint::Blob& Checkpoint::get(const std::string& name) const {
  const auto it = blobs.find(name);
  if (it == blobs.end()) throw_data("checkpoint blob missing: " + name);
  return it->second;
}

void Checkpoint::load_into(const std::string& name, Tensor2<float>& t) const {
  const Blob& b = get(name);
  if (b.rows != t.rows || b.cols != t.cols)
    throw_data("checkpoint blob " + name + " has shape " + std::to_string(b.rows) +
               "x" + std::to_string(b.cols) + ", expected " +
               std::to_string(t.rows) + "x" + std::to_string(t.cols));
  std::copy(b.data.begin(), b.data.end(), t.v.begin());
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw_data("cannot write checkpoint: " + path);
  f.write("SCVE", 4);
  put_raw<uint32_t>(f, kVersion);
  put_raw<uint64_t>(f, ckpt.config_hash);
  put_raw<uint64_t>(f, ckpt.step);
  put_raw<uint32_t>(f, static_cast<uint32_t>(ckpt.blobs.size()));
  for (const auto& [name, blob] : ckpt.blobs) {
    put_raw<uint32_t>(f, static_cast<uint32_t>(name.size()));
    f.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_raw<uint32_t>(f, static_cast<uint32_t>(blob.rows));
    put_raw<uint32_t>(f, static_cast<uint32_t>(blob.cols));
    f.write(reinterpret_cast<const char*>(blob.data.data()),
            static_cast<std::streamsize>(blob.data.size() * sizeof(float)));
  }
  if (!f) throw_data("short write to checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw_data("cannot open checkpoint: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "SCVE", 4) != 0)
    throw_data("bad checkpoint magic in " + path);
  const auto version = get_raw<uint32_t>(f, path);
  if (version != kVersion)
    throw_data("unsupported checkpoint version " + std::to_string(version) +
               " in " + path);
  Checkpoint ckpt;
  ckpt.config_hash = get_raw<uint64_t>(f, path);
  ckpt.step = get_raw<uint64_t>(f, path);
  const auto count = get_raw<uint32_t>(f, path);
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = get_raw<uint32_t>(f, path);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw_data("truncated checkpoint: " + path);
    Checkpoint::Blob b;
    b.rows = static_cast<int>(get_raw<uint32_t>(f, path));
    b.cols = static_cast<int>(get_raw<uint32_t>(f, path));
    b.data.resize(static_cast<std::size_t>(b.rows) * b.cols);
    f.read(reinterpret_cast<char*>(b.data.data()),
           static_cast<std::streamsize>(b.data.size() * sizeof(float)));
    if (!f) throw_data("truncated checkpoint: " + path);
    ckpt.blobs.emplace(std::move(name), std::move(b));
  }
  return ckpt;
}

void pack_model(Checkpoint& ckpt, const std::string& prefix,
                const ParamStore<float>& store, const Adam<float>* opt) {
  const auto& items = store.items();
  for (const auto* p : items) ckpt.put(prefix + p->name, p->w);
  if (opt) {
    if (opt->m.size() != items.size())
      throw_data("optimizer state does not match parameter store");
    for (std::size_t i = 0; i < items.size(); ++i) {
      ckpt.put("opt." + prefix + items[i]->name + ".m", opt->m[i]);
      ckpt.put("opt." + prefix + items[i]->name + ".v", opt->v[i]);
    }
    Tensor2<float> t(1, 1);
    t.at(0, 0) = static_cast<float>(opt->t);
    ckpt.put("opt." + prefix + "t", t);
  }
}

void unpack_model(const Checkpoint& ckpt, const std::string& prefix,
                  ParamStore<float>& store, Adam<float>* opt) {
  const auto& items = store.items();
  for (auto* p : items) ckpt.load_into(prefix + p->name, p->w);
  if (opt) {
    if (opt->m.size() != items.size())
      throw_data("optimizer state does not match parameter store");
    for (std::size_t i = 0; i < items.size(); ++i) {
      ckpt.load_into("opt." + prefix + items[i]->name + ".m", opt->m[i]);
      ckpt.load_into("opt." + prefix + items[i]->name + ".v", opt->v[i]);
    }
    const auto& t = ckpt.get("opt." + prefix + "t");
    if (t.data.size() != 1) throw_data("bad optimizer step record");
    opt->t = static_cast<int64_t>(t.data[0]);
  }
}

}  // namespace scve
