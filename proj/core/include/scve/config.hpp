#pragma once
// Run configuration: named presets plus a line-oriented "key = value" file
// format with # comments. The canonical serialization feeds the config hash
// embedded in every artifact.

#include <cstdint>
#include <string>

#include "scve/codec.hpp"
#include "scve/model.hpp"

namespace scve {

struct RunConfig {
  std::string preset = "desk";
  uint64_t seed = 1;

  ModelConfig model;
  CodecConfig codec;

  // training
  double learning_rate = 2e-4;
  int batch_size = 1;
  double temperature = 0.2;
  double grad_clip = 100.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // weight decay decreases linearly from start to end, updated every
  // `interval` steps across `horizon` steps
  double weight_decay_start = 2e-4;
  double weight_decay_end = 1e-6;
  int weight_decay_interval = 1000;
  int weight_decay_horizon = 20000;

  int checkpoint_interval = 2000;
  int eval_interval = 500;
  int eval_items = 64;  // held-out items per interim evaluation
  double holdout_fraction = 0.1;
  // early stop once both accuracy targets are met (0 disables)
  double target_ar_acc = 0.0;
  double target_nar_acc = 0.0;
  int max_len_extra = 64;  // generation cap: 4 x prompt length + this

  double weight_decay_at(int64_t step) const;
  int max_generate_len(int prompt_len) const {
    return 4 * prompt_len + max_len_extra;
  }
};

RunConfig preset_config(const std::string& name);  // "desk" | "paper-scale"

// key = value lines applied on top of the given base config.
RunConfig load_config_file(const std::string& path, RunConfig base);
void apply_config_line(RunConfig& cfg, const std::string& line, int lineno);

std::string canonical_config(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);
void save_config(const std::string& path, const RunConfig& cfg);

}  // namespace scve
