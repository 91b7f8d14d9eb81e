#pragma once
// End-to-end orchestration behind the CLI: training with checkpointing and
// resume, the synthesis pipeline (AR length prediction, NAR stage fill,
// codec reconstruction), replayable synthesis metadata, the style sweep and
// the evaluation reports. Everything here is deterministic given the
// RunConfig hash, the seed and the command.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "scve/checkpoint.hpp"
#include "scve/config.hpp"
#include "scve/corpus.hpp"
#include "scve/metrics.hpp"
#include "scve/model.hpp"

namespace scve {

// ---------------------------------------------------------------------------
// Training

struct EvalResult {
  double ar_acc = 0.0;
  double nar_acc_min = 0.0;
  double nar_acc_mean = 0.0;
  std::vector<double> nar_per_stage;  // stages 2..8
  int items = 0;
};

class Trainer {
 public:
  Trainer(const RunConfig& cfg, std::vector<TrainingExample> examples);

  struct StepLosses {
    double ar = 0.0;
    double nar = 0.0;
  };
  StepLosses train_step(int64_t step);

  EvalResult evaluate(int max_items = -1) const;  // held-out split
  ARModel<float>& ar() { return *ar_; }
  NARModel<float>& nar() { return *nar_; }
  const ARModel<float>& ar() const { return *ar_; }
  const NARModel<float>& nar() const { return *nar_; }
  Adam<float>& ar_opt() { return ar_opt_; }
  Adam<float>& nar_opt() { return nar_opt_; }
  const RunConfig& config() const { return cfg_; }
  std::size_t train_size() const { return train_idx_.size(); }
  std::size_t holdout_size() const { return holdout_idx_.size(); }

 private:
  const TrainingExample& train_item(int64_t linear_index);

  RunConfig cfg_;
  std::vector<TrainingExample> examples_;
  std::vector<std::size_t> train_idx_, holdout_idx_;
  std::unique_ptr<ARModel<float>> ar_;
  std::unique_ptr<NARModel<float>> nar_;
  Adam<float> ar_opt_, nar_opt_;
  int64_t perm_epoch_ = -1;
  std::vector<std::size_t> perm_;
};

struct TrainOptions {
  RunConfig cfg;
  std::string manifest_path;
  std::string books_path;
  std::string out_dir;
  int64_t steps = 1000;
  std::string resume_from;  // checkpoint path; empty for a fresh run
  bool quiet = false;
};

struct TrainReport {
  int64_t final_step = 0;
  double final_ar_loss = 0.0;
  double final_nar_loss = 0.0;
  EvalResult final_eval;
  bool targets_met = false;
  std::string final_checkpoint;
};

TrainReport cmd_train(const TrainOptions& opt);

// ---------------------------------------------------------------------------
// Synthesis

struct SynthesisRequest {
  std::string text;
  QuantizedTokenGrid prompt;
  std::vector<double> control;  // length N
  uint64_t seed = 1;
  double temperature = 0.2;
};

struct SynthesisResult {
  AudioBuffer audio;
  QuantizedTokenGrid grid;  // generated region, all 8 stages
  bool truncated = false;
};

SynthesisResult synthesize(const SynthesisRequest& req, const ARModel<float>& ar,
                           const NARModel<float>& nar, const CodebookSet& books,
                           const RunConfig& cfg, bool bypass_scaling = false);

struct SynthesizeOptions {
  std::string checkpoint_path;
  std::string config_path;  // empty: config.cfg next to the checkpoint
  std::string books_path;
  std::string text;
  std::string prompt_wav;
  std::vector<double> control;  // empty + baseline=false is an error
  bool baseline = false;
  uint64_t seed = 1;
  double temperature = -1.0;  // < 0: take the config value
  std::string out_wav;
  bool bypass_scaling = false;  // test hook: skip the c (x) S multiply
};

struct SynthesizeReport {
  std::string out_wav, out_codes, out_meta;
  uint64_t out_wav_hash = 0;
  bool truncated = false;
  AcousticSummary summary;
};

SynthesizeReport cmd_synthesize(const SynthesizeOptions& opt);

// Re-run a synthesis exactly as its sidecar records it (inputs are verified
// by hash first); returns the new report.
SynthesizeReport cmd_replay(const std::string& sidecar_path,
                            const std::string& out_wav_override);

// ---------------------------------------------------------------------------
// Style sweep

struct StyleSweepOptions {
  std::string checkpoint_path;
  std::string config_path;
  std::string books_path;
  std::string text;
  std::string prompt_wav;
  int token = 1;  // 1-based index into the control vector
  std::vector<double> values;
  uint64_t seed = 1;
  double temperature = -1.0;
  std::string out_dir;
};

struct StyleSweepRow {
  double value = 0.0;
  double mean_f0 = 0.0;
  double duration = 0.0;
  double rms = 0.0;
  double voiced_fraction = 0.0;
  std::string wav_path;
};

struct StyleSweepReport {
  std::vector<StyleSweepRow> rows;
  std::string table_path;
};

StyleSweepReport cmd_style_sweep(const StyleSweepOptions& opt);

// ---------------------------------------------------------------------------
// Evaluation & corpus commands

struct EvalF0Report {
  double fve_hz = 0.0;
  double f0gpe_percent = 0.0;
  int frames = 0;
  std::string line;  // "FVE=<x>Hz F0GPE=<y>% frames=<n>"
};

EvalF0Report cmd_eval_f0(const std::string& ref_wav, const std::string& syn_wav,
                         const std::string& csv_out = "",
                         const std::string& track_dump_prefix = "");

WERBreakdown cmd_eval_wer(const std::string& ref_file, const std::string& hyp_file,
                          const std::string& csv_out = "");

AcousticSummary cmd_eval_summary(const std::string& wav, const std::string& csv_out,
                                 const std::string& mel_out,
                                 const CodecConfig& codec_cfg);

struct CorpusGenerateOptions {
  int count = 100;
  uint64_t seed = 1;
  std::string out_dir;
  CorpusParams params;
};

// Writes wav/utt<id>.wav files plus manifest.csv; returns the manifest path.
std::string cmd_corpus_generate(const CorpusGenerateOptions& opt);

// Fit codebooks over every *.wav under a directory (sorted), write books.
void cmd_codec_fit(const std::string& corpus_dir, const std::string& out_path,
                   const CodecConfig& cfg, uint64_t seed);

// Helpers shared by commands and the acceptance suite.
struct LoadedModels {
  RunConfig cfg;
  uint64_t config_hash = 0;
  uint64_t step = 0;
  std::unique_ptr<ARModel<float>> ar;
  std::unique_ptr<NARModel<float>> nar;
};
LoadedModels load_models(const std::string& checkpoint_path,
                         const std::string& config_path);

QuantizedTokenGrid encode_prompt(const std::string& wav_path,
                                 const CodebookSet& books);

}  // namespace scve
