#include "scve/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace scve {

double RunConfig::weight_decay_at(int64_t step) const {
  if (weight_decay_horizon <= 0) return weight_decay_end;
  const int64_t bucket = (step / weight_decay_interval) * weight_decay_interval;
  const double frac =
      std::min(1.0, static_cast<double>(bucket) / weight_decay_horizon);
  return weight_decay_start + frac * (weight_decay_end - weight_decay_start);
}

RunConfig preset_config(const std::string& name) {
  RunConfig cfg;
  if (name == "desk") {
    cfg.preset = "desk";
    return cfg;
  }
  if (name == "paper-scale") {
    cfg.preset = "paper-scale";
    cfg.model.d_model = 1024;
    cfg.model.d_ff = 2048;
    cfg.model.n_heads = 16;
    cfg.model.ar_blocks = 12;
    cfg.model.nar_blocks = 12;
    cfg.model.d_style = 256;
    cfg.model.style_heads = 8;
    cfg.model.style_tokens = 10;
    cfg.model.codebook_size = 1024;
    cfg.codec.sample_rate = 24000;
    cfg.codec.frame_size = 600;  // 25 ms at 24 kHz
    cfg.codec.frame_hop = 240;   // 10 ms
    cfg.codec.codebook_size = 1024;
    cfg.batch_size = 20;
    return cfg;
  }
  throw_usage("unknown preset: " + name + " (expected desk or paper-scale)");
}

namespace {

struct Field {
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_int(int64_t v) { return std::to_string(v); }

std::string fmt_f(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int parse_int(const std::string& s) {
  std::size_t pos = 0;
  const long long v = std::stoll(s, &pos);
  if (pos != s.size()) throw_data("bad integer: " + s);
  return static_cast<int>(v);
}

uint64_t parse_u64(const std::string& s) {
  std::size_t pos = 0;
  const unsigned long long v = std::stoull(s, &pos);
  if (pos != s.size()) throw_data("bad integer: " + s);
  return v;
}

double parse_f(const std::string& s) {
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw_data("bad number: " + s);
  return v;
}

#define INT_FIELD(expr)                                                    \
  Field{[](const RunConfig& c) { return fmt_int(c.expr); },                \
        [](RunConfig& c, const std::string& s) { c.expr = parse_int(s); }}
#define F_FIELD(expr)                                                      \
  Field{[](const RunConfig& c) { return fmt_f(c.expr); },                  \
        [](RunConfig& c, const std::string& s) { c.expr = parse_f(s); }}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> f = {
      {"preset", {[](const RunConfig& c) { return c.preset; },
                  [](RunConfig& c, const std::string& s) { c.preset = s; }}},
      {"seed", {[](const RunConfig& c) { return fmt_int(static_cast<int64_t>(c.seed)); },
                [](RunConfig& c, const std::string& s) { c.seed = parse_u64(s); }}},
      {"d_model", INT_FIELD(model.d_model)},
      {"d_ff", INT_FIELD(model.d_ff)},
      {"n_heads", INT_FIELD(model.n_heads)},
      {"ar_blocks", INT_FIELD(model.ar_blocks)},
      {"nar_blocks", INT_FIELD(model.nar_blocks)},
      {"style_tokens", INT_FIELD(model.style_tokens)},
      {"d_style", INT_FIELD(model.d_style)},
      {"style_heads", INT_FIELD(model.style_heads)},
      // one K for the quantizer and both token classifiers
      {"codebook_size",
       {[](const RunConfig& c) { return fmt_int(c.model.codebook_size); },
        [](RunConfig& c, const std::string& s) {
          c.model.codebook_size = parse_int(s);
          c.codec.codebook_size = c.model.codebook_size;
        }}},
      {"sample_rate", INT_FIELD(codec.sample_rate)},
      {"frame_size", INT_FIELD(codec.frame_size)},
      {"frame_hop", INT_FIELD(codec.frame_hop)},
      {"codec_bands", INT_FIELD(codec.bands)},
      {"codec_fmin", F_FIELD(codec.fmin_hz)},
      {"codec_fmax", F_FIELD(codec.fmax_hz)},
      {"kmeans_iters", INT_FIELD(codec.kmeans_iters)},
      {"kmeans_sample", INT_FIELD(codec.kmeans_sample)},
      {"learning_rate", F_FIELD(learning_rate)},
      {"batch_size", INT_FIELD(batch_size)},
      {"temperature", F_FIELD(temperature)},
      {"grad_clip", F_FIELD(grad_clip)},
      {"adam_beta1", F_FIELD(adam_beta1)},
      {"adam_beta2", F_FIELD(adam_beta2)},
      {"adam_eps", F_FIELD(adam_eps)},
      {"weight_decay_start", F_FIELD(weight_decay_start)},
      {"weight_decay_end", F_FIELD(weight_decay_end)},
      {"weight_decay_interval", INT_FIELD(weight_decay_interval)},
      {"weight_decay_horizon", INT_FIELD(weight_decay_horizon)},
      {"checkpoint_interval", INT_FIELD(checkpoint_interval)},
      {"eval_interval", INT_FIELD(eval_interval)},
      {"eval_items", INT_FIELD(eval_items)},
      {"holdout_fraction", F_FIELD(holdout_fraction)},
      {"target_ar_acc", F_FIELD(target_ar_acc)},
      {"target_nar_acc", F_FIELD(target_nar_acc)},
      {"max_len_extra", INT_FIELD(max_len_extra)},
  };
  return f;
}

#undef INT_FIELD
#undef F_FIELD

void validate(const RunConfig& c) {
  auto positive = [](int v, const char* name) {
    if (v <= 0) throw_data(std::string("config: ") + name + " must be positive");
  };
  positive(c.model.d_model, "d_model");
  positive(c.model.d_ff, "d_ff");
  positive(c.model.n_heads, "n_heads");
  positive(c.model.ar_blocks, "ar_blocks");
  positive(c.model.nar_blocks, "nar_blocks");
  positive(c.model.style_tokens, "style_tokens");
  positive(c.model.d_style, "d_style");
  positive(c.model.style_heads, "style_heads");
  positive(c.model.codebook_size, "codebook_size");
  positive(c.codec.sample_rate, "sample_rate");
  positive(c.codec.frame_size, "frame_size");
  positive(c.codec.frame_hop, "frame_hop");
  positive(c.codec.bands, "codec_bands");
  if (!(c.temperature > 0.0)) throw_data("config: temperature must be positive");
  if (c.model.d_model % c.model.n_heads != 0)
    throw_data("config: d_model must be divisible by n_heads");
  if (c.model.d_style % c.model.style_heads != 0)
    throw_data("config: d_style must be divisible by style_heads");
  if (c.model.d_model % 2 != 0) throw_data("config: d_model must be even");
  if (c.model.codebook_size != c.codec.codebook_size)
    throw_data("config: model and codec codebook sizes must agree");
  if (c.holdout_fraction < 0.0 || c.holdout_fraction >= 1.0)
    throw_data("config: holdout_fraction must be in [0, 1)");
}

}  // namespace

void apply_config_line(RunConfig& cfg, const std::string& raw, int lineno) {
  std::string line = raw;
  const auto hash = line.find('#');
  if (hash != std::string::npos) line.erase(hash);
  auto trim = [](std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
  };
  trim(line);
  if (line.empty()) return;
  const auto eq = line.find('=');
  if (eq == std::string::npos)
    throw_data("config line " + std::to_string(lineno) + ": expected key = value");
  std::string key = line.substr(0, eq);
  std::string value = line.substr(eq + 1);
  trim(key);
  trim(value);
  const auto& f = fields();
  const auto it = f.find(key);
  if (it == f.end())
    throw_data("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  it->second.set(cfg, value);
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream f(path);
  if (!f) throw_data("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) apply_config_line(base, line, ++lineno);
  validate(base);
  return base;
}

std::string canonical_config(const RunConfig& cfg) {
  std::ostringstream os;
  for (const auto& [key, field] : fields())
    os << key << " = " << field.get(cfg) << "\n";
  return os.str();
}

uint64_t config_hash(const RunConfig& cfg) {
  return fnv1a64(canonical_config(cfg));
}

void save_config(const std::string& path, const RunConfig& cfg) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw_data("cannot write config file: " + path);
  f << canonical_config(cfg);
}

}  // namespace scve
