#include "scve/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace scve {

namespace {

// One training process per output directory.
class LockFile {
 public:
  explicit LockFile(const std::string& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw_data("training directory is locked (remove " + path +
                 " if no other process is training here)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~LockFile() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  LockFile(const LockFile&) = delete;
  LockFile& operator=(const LockFile&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

void clip_gradients(ParamStore<float>& store, double clip) {
  if (clip <= 0.0) return;
  const double norm = store.grad_norm();
  if (!std::isfinite(norm)) throw_numeric("non-finite gradient norm");
  if (norm > clip) store.scale_grads(clip / norm);
}

void verify_books_match(const CodebookSet& books, const RunConfig& cfg) {
  const CodecConfig& b = books.cfg;
  const CodecConfig& c = cfg.codec;
  if (b.sample_rate != c.sample_rate || b.frame_size != c.frame_size ||
      b.frame_hop != c.frame_hop || b.bands != c.bands ||
      b.codebook_size != c.codebook_size)
    throw_data("codebooks were fit with a different codec configuration");
  if (cfg.model.codebook_size != b.codebook_size)
    throw_data("model codebook size does not match the codebooks");
}

std::string sibling_config_path(const std::string& checkpoint_path) {
  return (fs::path(checkpoint_path).parent_path() / "config.cfg").string();
}

std::string strip_wav_suffix(const std::string& path) {
  if (path.size() > 4 && path.substr(path.size() - 4) == ".wav")
    return path.substr(0, path.size() - 4);
  return path;
}

std::string resolve_relative(const std::string& base_file, const std::string& p) {
  fs::path path(p);
  if (path.is_absolute()) return p;
  return (fs::path(base_file).parent_path() / path).string();
}

}  // namespace

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(const RunConfig& cfg, std::vector<TrainingExample> examples)
    : cfg_(cfg), examples_(std::move(examples)) {
  if (examples_.empty()) throw_data("trainer: empty training set");
  std::vector<std::size_t> order(examples_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng(derive_seed(cfg_.seed, "train.split"));
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[split_rng.next_below(i)]);
  auto holdout_n =
      static_cast<std::size_t>(std::lround(cfg_.holdout_fraction * examples_.size()));
  if (holdout_n >= examples_.size()) holdout_n = examples_.size() - 1;
  holdout_idx_.assign(order.begin(), order.begin() + holdout_n);
  train_idx_.assign(order.begin() + holdout_n, order.end());

  ar_ = std::make_unique<ARModel<float>>(cfg_.model, cfg_.seed);
  nar_ = std::make_unique<NARModel<float>>(cfg_.model, cfg_.seed);
  ar_opt_.beta1 = nar_opt_.beta1 = cfg_.adam_beta1;
  ar_opt_.beta2 = nar_opt_.beta2 = cfg_.adam_beta2;
  ar_opt_.eps = nar_opt_.eps = cfg_.adam_eps;
  ar_opt_.init(ar_->store);
  nar_opt_.init(nar_->store);
}

const TrainingExample& Trainer::train_item(int64_t linear_index) {
  const auto n = static_cast<int64_t>(train_idx_.size());
  const int64_t epoch = linear_index / n;
  const auto pos = static_cast<std::size_t>(linear_index % n);
  if (epoch != perm_epoch_) {
    perm_ = train_idx_;
    Rng rng(derive_seed(cfg_.seed, "train.order", static_cast<uint64_t>(epoch)));
    for (std::size_t i = perm_.size(); i > 1; --i)
      std::swap(perm_[i - 1], perm_[rng.next_below(i)]);
    perm_epoch_ = epoch;
  }
  return examples_[perm_[pos]];
}

Trainer::StepLosses Trainer::train_step(int64_t step) {
  ar_->store.zero_grads();
  nar_->store.zero_grads();
  Rng stage_rng(derive_seed(cfg_.seed, "train.stage", static_cast<uint64_t>(step)));
  const int batch = std::max(1, cfg_.batch_size);
  const double inv_b = 1.0 / batch;
  const auto ones = ones_control(cfg_.model.style_tokens);
  StepLosses losses;
  for (int b = 0; b < batch; ++b) {
    const TrainingExample& ex = train_item(step * batch + b);
    losses.ar +=
        ar_->loss_and_grad(ex.text.tokens, {}, ex.grid.codes[0], inv_b) * inv_b;
    const int d = 2 + static_cast<int>(stage_rng.next_below(kRvqStages - 1));
    losses.nar += nar_->loss_and_grad(ex.text.tokens, ex.grid, d, ones, inv_b) * inv_b;
  }
  clip_gradients(ar_->store, cfg_.grad_clip);
  clip_gradients(nar_->store, cfg_.grad_clip);
  const double wd = cfg_.weight_decay_at(step);
  ar_opt_.step(ar_->store, cfg_.learning_rate, wd);
  nar_opt_.step(nar_->store, cfg_.learning_rate, wd);
  return losses;
}

EvalResult Trainer::evaluate(int max_items) const {
  EvalResult out;
  const auto n = max_items < 0
                     ? holdout_idx_.size()
                     : std::min<std::size_t>(holdout_idx_.size(),
                                             static_cast<std::size_t>(max_items));
  if (n == 0) return out;
  struct Counts {
    std::size_t ar_ok = 0, ar_total = 0;
    std::size_t nar_ok[kRvqStages - 1] = {0};
    std::size_t nar_total[kRvqStages - 1] = {0};
  };
  std::vector<Counts> per_item(n);
  parallel_for(n, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const TrainingExample& ex = examples_[holdout_idx_[i]];
      Counts& c = per_item[i];
      ar_->accuracy(ex.text.tokens, {}, ex.grid.codes[0], c.ar_ok, c.ar_total);
      for (int d = 2; d <= kRvqStages; ++d)
        nar_->accuracy(ex.text.tokens, ex.grid, d, c.nar_ok[d - 2],
                       c.nar_total[d - 2]);
    }
  });
  std::size_t ar_ok = 0, ar_total = 0;
  std::size_t nar_ok[kRvqStages - 1] = {0}, nar_total[kRvqStages - 1] = {0};
  for (const auto& c : per_item) {
    ar_ok += c.ar_ok;
    ar_total += c.ar_total;
    for (int s = 0; s < kRvqStages - 1; ++s) {
      nar_ok[s] += c.nar_ok[s];
      nar_total[s] += c.nar_total[s];
    }
  }
  out.items = static_cast<int>(n);
  out.ar_acc = ar_total ? static_cast<double>(ar_ok) / ar_total : 0.0;
  out.nar_per_stage.resize(kRvqStages - 1);
  out.nar_acc_min = 1.0;
  double mean = 0.0;
  for (int s = 0; s < kRvqStages - 1; ++s) {
    out.nar_per_stage[s] =
        nar_total[s] ? static_cast<double>(nar_ok[s]) / nar_total[s] : 0.0;
    out.nar_acc_min = std::min(out.nar_acc_min, out.nar_per_stage[s]);
    mean += out.nar_per_stage[s];
  }
  out.nar_acc_mean = mean / (kRvqStages - 1);
  return out;
}

// ---------------------------------------------------------------------------
// cmd_train

namespace {

void write_checkpoint_files(const std::string& out_dir, uint64_t chash,
                            int64_t step, Trainer& trainer, std::string& last_path) {
  Checkpoint ckpt;
  ckpt.config_hash = chash;
  ckpt.step = static_cast<uint64_t>(step);
  pack_model(ckpt, "ar.", trainer.ar().store, &trainer.ar_opt());
  pack_model(ckpt, "nar.", trainer.nar().store, &trainer.nar_opt());
  last_path = out_dir + "/ckpt_step" + std::to_string(step) + ".scve";
  write_checkpoint(last_path, ckpt);
}

}  // namespace

TrainReport cmd_train(const TrainOptions& opt) {
  fs::create_directories(opt.out_dir);
  LockFile lock(opt.out_dir + "/.lock");
  const uint64_t chash = config_hash(opt.cfg);

  const std::string cfg_path = opt.out_dir + "/config.cfg";
  if (fs::exists(cfg_path)) {
    const RunConfig existing = load_config_file(cfg_path, RunConfig{});
    if (config_hash(existing) != chash)
      throw_data("config hash mismatch with existing " + cfg_path);
  } else {
    save_config(cfg_path, opt.cfg);
  }

  const CodebookSet books = read_codebooks(opt.books_path);
  verify_books_match(books, opt.cfg);

  const auto entries = read_manifest(opt.manifest_path);
  if (entries.empty()) throw_data("manifest has no utterances");
  std::vector<CorpusItem> corpus(entries.size());
  parallel_for(entries.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      corpus[i].id = entries[i].id;
      corpus[i].spec = entries[i].spec;
      corpus[i].transcript = entries[i].transcript;
      corpus[i].audio =
          read_wav(resolve_relative(opt.manifest_path, entries[i].wav_path));
    }
  });
  auto examples = corpus_to_training_set(corpus, books, opt.out_dir + "/prep");
  corpus.clear();
  corpus.shrink_to_fit();

  Trainer trainer(opt.cfg, std::move(examples));

  int64_t start_step = 0;
  if (!opt.resume_from.empty()) {
    const Checkpoint ckpt = read_checkpoint(opt.resume_from);
    if (ckpt.config_hash != chash)
      throw_data("config hash mismatch: checkpoint " + opt.resume_from +
                 " was trained with a different configuration");
    unpack_model(ckpt, "ar.", trainer.ar().store, &trainer.ar_opt());
    unpack_model(ckpt, "nar.", trainer.nar().store, &trainer.nar_opt());
    start_step = static_cast<int64_t>(ckpt.step);
  }

  const auto mode = start_step > 0 ? std::ios::app : std::ios::trunc;
  std::ofstream loss_log(opt.out_dir + "/loss_log.csv", mode);
  if (!loss_log) throw_data("cannot write loss log");
  std::ofstream eval_log(opt.out_dir + "/eval_log.csv", mode);
  if (start_step == 0) {
    loss_log << "step,ar_loss,nar_loss\n";
    eval_log << "step,items,ar_acc,nar_acc_min,nar_acc_mean,s2,s3,s4,s5,s6,s7,s8\n";
  }

  auto log_eval = [&](int64_t step, const EvalResult& ev) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%lld,%d,%.6f,%.6f,%.6f",
                  static_cast<long long>(step), ev.items, ev.ar_acc,
                  ev.nar_acc_min, ev.nar_acc_mean);
    eval_log << buf;
    for (double a : ev.nar_per_stage) {
      std::snprintf(buf, sizeof(buf), ",%.6f", a);
      eval_log << buf;
    }
    eval_log << "\n" << std::flush;
  };

  TrainReport report;
  const bool has_targets = opt.cfg.target_ar_acc > 0.0 && opt.cfg.target_nar_acc > 0.0;
  std::string last_ckpt;
  const auto t0 = std::chrono::steady_clock::now();
  int64_t step = start_step;
  for (; step < opt.steps; ++step) {
    Trainer::StepLosses losses;
    try {
      losses = trainer.train_step(step);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numeric) {
        std::ofstream dump(opt.out_dir + "/numeric_fault.txt", std::ios::trunc);
        dump << "step " << step << ": " << e.what() << "\n";
        dump << "ar grad norm: " << trainer.ar().store.grad_norm() << "\n";
        dump << "nar grad norm: " << trainer.nar().store.grad_norm() << "\n";
      }
      throw;
    }
    const int64_t done = step + 1;
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%lld,%.6f,%.6f\n",
                  static_cast<long long>(done), losses.ar, losses.nar);
    loss_log << buf;
    report.final_ar_loss = losses.ar;
    report.final_nar_loss = losses.nar;

    if (!opt.quiet && done % 100 == 0) {
      const double dt = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - t0)
                            .count();
      std::printf("step %lld  ar %.4f  nar %.4f  (%.1f steps/s)\n",
                  static_cast<long long>(done), losses.ar, losses.nar,
                  (done - start_step) / std::max(1e-9, dt));
      std::fflush(stdout);
    }

    bool stop = false;
    if (opt.cfg.eval_interval > 0 &&
        (done % opt.cfg.eval_interval == 0 || done == opt.steps)) {
      EvalResult ev = trainer.evaluate(opt.cfg.eval_items);
      log_eval(done, ev);
      if (has_targets && ev.ar_acc >= opt.cfg.target_ar_acc &&
          ev.nar_acc_min >= opt.cfg.target_nar_acc) {
        // confirm on the full held-out split before stopping early
        ev = trainer.evaluate();
        log_eval(done, ev);
        if (ev.ar_acc >= opt.cfg.target_ar_acc &&
            ev.nar_acc_min >= opt.cfg.target_nar_acc) {
          report.final_eval = ev;
          report.targets_met = true;
          stop = true;
        }
      }
    }
    if (stop || done == opt.steps ||
        (opt.cfg.checkpoint_interval > 0 && done % opt.cfg.checkpoint_interval == 0)) {
      loss_log.flush();
      write_checkpoint_files(opt.out_dir, chash, done, trainer, last_ckpt);
    }
    if (stop) {
      step = done;
      break;
    }
  }
  report.final_step = std::min<int64_t>(step, opt.steps);
  if (last_ckpt.empty())
    write_checkpoint_files(opt.out_dir, chash, report.final_step, trainer, last_ckpt);
  report.final_checkpoint = last_ckpt;
  if (!report.targets_met) {
    report.final_eval = trainer.evaluate();
    log_eval(report.final_step, report.final_eval);
    if (has_targets)
      report.targets_met = report.final_eval.ar_acc >= opt.cfg.target_ar_acc &&
                           report.final_eval.nar_acc_min >= opt.cfg.target_nar_acc;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Synthesis

SynthesisResult synthesize(const SynthesisRequest& req, const ARModel<float>& ar,
                           const NARModel<float>& nar, const CodebookSet& books,
                           const RunConfig& cfg, bool bypass_scaling) {
  if (req.prompt.num_frames < 1) throw_data("synthesize: empty prompt grid");
  if (!(req.temperature > 0.0))
    throw_data("sampling temperature must be positive");
  validate_control(req.control, cfg.model.style_tokens);
  const PhonemeSequence text = tokenize(req.text);

  Rng sample_rng(derive_seed(req.seed, "synth.sample"));
  const int lp = req.prompt.num_frames;
  const GenerationResult gen =
      ar.generate(text.tokens, req.prompt.codes[0], req.temperature, sample_rng,
                  cfg.max_generate_len(lp));
  if (gen.codes.empty())
    throw_data("empty generation: the AR model emitted EOS immediately");
  const int lz = static_cast<int>(gen.codes.size());

  QuantizedTokenGrid cond;
  cond.num_frames = lp + lz;
  cond.codebook_size = books.cfg.codebook_size;
  for (int s = 0; s < kRvqStages; ++s) {
    cond.codes[s] = req.prompt.codes[s];
    cond.codes[s].resize(static_cast<std::size_t>(lp + lz), 0);
  }
  std::copy(gen.codes.begin(), gen.codes.end(), cond.codes[0].begin() + lp);

  SynthesisResult out;
  out.truncated = gen.truncated;
  out.grid.num_frames = lz;
  out.grid.codebook_size = books.cfg.codebook_size;
  out.grid.codes[0] = gen.codes;
  for (int d = 2; d <= kRvqStages; ++d) {
    const std::vector<int> pred =
        nar.argmax_codes(text.tokens, cond, d, req.control, bypass_scaling);
    out.grid.codes[d - 1].assign(pred.begin() + lp, pred.end());
    std::copy(pred.begin() + lp, pred.end(), cond.codes[d - 1].begin() + lp);
  }
  const FrameMatrix frames = rvq_decode(out.grid, books, kRvqStages);
  out.audio = frame_synthesize(frames, books.cfg);
  return out;
}

LoadedModels load_models(const std::string& checkpoint_path,
                         const std::string& config_path) {
  LoadedModels out;
  const std::string cfg_path =
      config_path.empty() ? sibling_config_path(checkpoint_path) : config_path;
  out.cfg = load_config_file(cfg_path, RunConfig{});
  out.config_hash = config_hash(out.cfg);
  const Checkpoint ckpt = read_checkpoint(checkpoint_path);
  if (ckpt.config_hash != out.config_hash)
    throw_data("config hash mismatch between " + cfg_path + " and " +
               checkpoint_path);
  out.step = ckpt.step;
  out.ar = std::make_unique<ARModel<float>>(out.cfg.model, out.cfg.seed);
  out.nar = std::make_unique<NARModel<float>>(out.cfg.model, out.cfg.seed);
  unpack_model(ckpt, "ar.", out.ar->store, nullptr);
  unpack_model(ckpt, "nar.", out.nar->store, nullptr);
  return out;
}

QuantizedTokenGrid encode_prompt(const std::string& wav_path,
                                 const CodebookSet& books) {
  const AudioBuffer audio = read_wav(wav_path);
  if (audio.sample_rate != books.cfg.sample_rate)
    throw_data("prompt sample rate " + std::to_string(audio.sample_rate) +
               " does not match codec rate " +
               std::to_string(books.cfg.sample_rate));
  return rvq_encode(frame_analyze(audio, books.cfg), books);
}

namespace {

std::string control_to_string(const std::vector<double>& c) {
  std::string s;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (i) s += ' ';
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", c[i]);
    s += buf;
  }
  return s;
}

}  // namespace

SynthesizeReport cmd_synthesize(const SynthesizeOptions& opt) {
  LoadedModels models = load_models(opt.checkpoint_path, opt.config_path);
  const CodebookSet books = read_codebooks(opt.books_path);
  verify_books_match(books, models.cfg);

  SynthesisRequest req;
  req.text = opt.text;
  req.prompt = encode_prompt(opt.prompt_wav, books);
  req.control = opt.baseline ? ones_control(models.cfg.model.style_tokens)
                             : opt.control;
  req.seed = opt.seed;
  req.temperature =
      opt.temperature > 0.0 ? opt.temperature : models.cfg.temperature;

  const SynthesisResult res =
      synthesize(req, *models.ar, *models.nar, books, models.cfg, opt.bypass_scaling);

  SynthesizeReport report;
  report.out_wav = opt.out_wav;
  write_wav(opt.out_wav, res.audio);
  const std::string base = strip_wav_suffix(opt.out_wav);
  report.out_codes = base + ".codes";
  write_codes(report.out_codes, res.grid);
  report.out_wav_hash = hash_file(opt.out_wav);
  report.truncated = res.truncated;
  report.summary = acoustic_summary(res.audio, books.cfg);

  json meta;
  meta["command"] = "synthesize";
  meta["checkpoint"] = opt.checkpoint_path;
  meta["checkpoint_hash"] = hash_hex(hash_file(opt.checkpoint_path));
  meta["checkpoint_step"] = models.step;
  meta["config"] = opt.config_path.empty() ? sibling_config_path(opt.checkpoint_path)
                                           : opt.config_path;
  meta["config_hash"] = hash_hex(models.config_hash);
  meta["books"] = opt.books_path;
  meta["books_hash"] = hash_hex(hash_file(opt.books_path));
  meta["prompt_wav"] = opt.prompt_wav;
  meta["prompt_wav_hash"] = hash_hex(hash_file(opt.prompt_wav));
  meta["text"] = opt.text;
  meta["control"] = req.control;
  meta["baseline"] = opt.baseline;
  meta["seed"] = opt.seed;
  meta["temperature"] = req.temperature;
  meta["out_wav"] = opt.out_wav;
  meta["out_wav_hash"] = hash_hex(report.out_wav_hash);
  meta["out_codes"] = report.out_codes;
  meta["truncated"] = res.truncated;
  report.out_meta = base + ".meta.json";
  std::ofstream mf(report.out_meta, std::ios::trunc);
  if (!mf) throw_data("cannot write metadata sidecar: " + report.out_meta);
  mf << meta.dump(2) << "\n";
  return report;
}

SynthesizeReport cmd_replay(const std::string& sidecar_path,
                            const std::string& out_wav_override) {
  std::ifstream f(sidecar_path);
  if (!f) throw_data("cannot open sidecar: " + sidecar_path);
  json meta;
  try {
    f >> meta;
  } catch (const json::exception& e) {
    throw_data("bad sidecar json: " + std::string(e.what()));
  }
  auto verify = [&](const char* path_key, const char* hash_key) {
    const std::string p = meta.at(path_key).get<std::string>();
    const std::string recorded = meta.at(hash_key).get<std::string>();
    if (hash_hex(hash_file(p)) != recorded)
      throw_data(std::string("sidecar input changed since recording: ") + p);
  };
  verify("checkpoint", "checkpoint_hash");
  verify("books", "books_hash");
  verify("prompt_wav", "prompt_wav_hash");

  SynthesizeOptions opt;
  opt.checkpoint_path = meta.at("checkpoint").get<std::string>();
  opt.config_path = meta.at("config").get<std::string>();
  opt.books_path = meta.at("books").get<std::string>();
  opt.text = meta.at("text").get<std::string>();
  opt.prompt_wav = meta.at("prompt_wav").get<std::string>();
  opt.control = meta.at("control").get<std::vector<double>>();
  opt.baseline = meta.at("baseline").get<bool>();
  opt.seed = meta.at("seed").get<uint64_t>();
  opt.temperature = meta.at("temperature").get<double>();
  opt.out_wav = out_wav_override.empty() ? meta.at("out_wav").get<std::string>()
                                         : out_wav_override;
  return cmd_synthesize(opt);
}

// ---------------------------------------------------------------------------
// Style sweep

StyleSweepReport cmd_style_sweep(const StyleSweepOptions& opt) {
  if (opt.values.empty()) throw_usage("style sweep needs at least one value");
  LoadedModels models = load_models(opt.checkpoint_path, opt.config_path);
  const CodebookSet books = read_codebooks(opt.books_path);
  verify_books_match(books, models.cfg);
  const int n_tokens = models.cfg.model.style_tokens;
  if (opt.token < 1 || opt.token > n_tokens)
    throw_usage("token index must be in 1.." + std::to_string(n_tokens));
  fs::create_directories(opt.out_dir);

  const QuantizedTokenGrid prompt = encode_prompt(opt.prompt_wav, books);
  const double tau =
      opt.temperature > 0.0 ? opt.temperature : models.cfg.temperature;

  StyleSweepReport report;
  report.table_path = opt.out_dir + "/sweep.csv";
  std::ofstream table(report.table_path, std::ios::trunc);
  if (!table) throw_data("cannot write sweep table");
  table << "value,mean_f0,duration,rms,voiced_fraction\n";

  for (double v : opt.values) {
    SynthesisRequest req;
    req.text = opt.text;
    req.prompt = prompt;
    req.control = ones_control(n_tokens);
    req.control[opt.token - 1] = v;
    validate_control(req.control, n_tokens);
    req.seed = opt.seed;
    req.temperature = tau;
    const SynthesisResult res =
        synthesize(req, *models.ar, *models.nar, books, models.cfg, false);

    char tag[64];
    std::snprintf(tag, sizeof(tag), "token%d_v%g", opt.token, v);
    const std::string stem = opt.out_dir + "/" + tag;
    write_wav(stem + ".wav", res.audio);
    write_codes(stem + ".codes", res.grid);

    const AcousticSummary sum = acoustic_summary(res.audio, books.cfg);
    write_mel_csv(stem + ".mel.csv", sum.mel);
    if (res.audio.duration() >= 0.04)
      write_f0_csv(stem + ".f0.csv", extract_f0(res.audio));

    // attention weights over the full (prompt + generated) grid at d = 8
    QuantizedTokenGrid full;
    full.num_frames = prompt.num_frames + res.grid.num_frames;
    full.codebook_size = books.cfg.codebook_size;
    for (int s = 0; s < kRvqStages; ++s) {
      full.codes[s] = prompt.codes[s];
      full.codes[s].insert(full.codes[s].end(), res.grid.codes[s].begin(),
                           res.grid.codes[s].end());
    }
    const Tensor2<double> w =
        models.nar->style_attention_weights(full, kRvqStages, req.control);
    std::ofstream att(stem + ".attention.csv", std::ios::trunc);
    att << "frame";
    for (int j = 0; j < n_tokens; ++j) att << ",token" << (j + 1);
    att << "\n";
    for (int i = 0; i < w.rows; ++i) {
      att << i;
      for (int j = 0; j < n_tokens; ++j) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), ",%.8f", w.at(i, j));
        att << buf;
      }
      att << "\n";
    }

    StyleSweepRow row;
    row.value = v;
    row.mean_f0 = sum.mean_f0_hz;
    row.duration = sum.total_duration_sec;
    row.rms = sum.rms;
    row.voiced_fraction = sum.voiced_fraction;
    row.wav_path = stem + ".wav";
    report.rows.push_back(row);

    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.17g,%.6f,%.6f,%.6f,%.6f\n", v,
                  row.mean_f0, row.duration, row.rms, row.voiced_fraction);
    table << buf;
  }
  return report;
}

// ---------------------------------------------------------------------------
// Evaluation commands

EvalF0Report cmd_eval_f0(const std::string& ref_wav, const std::string& syn_wav,
                         const std::string& csv_out,
                         const std::string& track_dump_prefix) {
  F0Track ref = extract_f0(read_wav(ref_wav));
  F0Track syn = extract_f0(read_wav(syn_wav));
  const std::size_t n = std::min(ref.size(), syn.size());
  ref.voiced.resize(n);
  ref.f0_hz.resize(n);
  syn.voiced.resize(n);
  syn.f0_hz.resize(n);
  if (!track_dump_prefix.empty()) {
    write_f0_csv(track_dump_prefix + ".ref.csv", ref);
    write_f0_csv(track_dump_prefix + ".syn.csv", syn);
  }
  EvalF0Report report;
  report.frames = static_cast<int>(n);
  report.fve_hz = f0_voiced_error(ref, syn);
  report.f0gpe_percent = f0_gross_pitch_error(ref, syn);
  char buf[128];
  std::snprintf(buf, sizeof(buf), "FVE=%.4fHz F0GPE=%.4f%% frames=%d",
                report.fve_hz, report.f0gpe_percent, report.frames);
  report.line = buf;
  if (!csv_out.empty()) {
    std::ofstream f(csv_out, std::ios::trunc);
    f << "fve_hz,f0gpe_percent,frames\n";
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%d\n", report.fve_hz,
                  report.f0gpe_percent, report.frames);
    f << buf;
  }
  return report;
}

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw_data("cannot open file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

WERBreakdown cmd_eval_wer(const std::string& ref_file, const std::string& hyp_file,
                          const std::string& csv_out) {
  const WERBreakdown wer =
      word_error_rate(read_text_file(ref_file), read_text_file(hyp_file));
  if (!csv_out.empty()) {
    std::ofstream f(csv_out, std::ios::trunc);
    f << "wer,substitutions,deletions,insertions,reference_words\n";
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%.6f,%d,%d,%d,%d\n", wer.wer,
                  wer.substitutions, wer.deletions, wer.insertions,
                  wer.reference_words);
    f << buf;
  }
  return wer;
}

AcousticSummary cmd_eval_summary(const std::string& wav, const std::string& csv_out,
                                 const std::string& mel_out,
                                 const CodecConfig& codec_cfg) {
  const AcousticSummary sum = acoustic_summary(read_wav(wav), codec_cfg);
  if (!csv_out.empty()) {
    std::ofstream f(csv_out, std::ios::trunc);
    f << "mean_f0,voiced_duration,total_duration,rms,voiced_fraction\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f,%.6f\n", sum.mean_f0_hz,
                  sum.voiced_duration_sec, sum.total_duration_sec, sum.rms,
                  sum.voiced_fraction);
    f << buf;
  }
  if (!mel_out.empty()) write_mel_csv(mel_out, sum.mel);
  return sum;
}

// ---------------------------------------------------------------------------
// Corpus / codec commands

std::string cmd_corpus_generate(const CorpusGenerateOptions& opt) {
  fs::create_directories(opt.out_dir + "/wav");
  const auto corpus = generate_corpus(opt.count, opt.seed, opt.params);
  std::vector<std::string> rel_paths(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "wav/utt%05d.wav", corpus[i].id);
      rel_paths[i] = name;
      write_wav(opt.out_dir + "/" + name, corpus[i].audio);
    }
  });
  const std::string manifest = opt.out_dir + "/manifest.csv";
  write_manifest(manifest, corpus, rel_paths);
  return manifest;
}

void cmd_codec_fit(const std::string& corpus_dir, const std::string& out_path,
                   const CodecConfig& cfg, uint64_t seed) {
  std::vector<std::string> wavs;
  for (const auto& entry : fs::recursive_directory_iterator(corpus_dir))
    if (entry.is_regular_file() && entry.path().extension() == ".wav")
      wavs.push_back(entry.path().string());
  std::sort(wavs.begin(), wavs.end());
  if (wavs.empty()) throw_data("no .wav files under " + corpus_dir);
  std::vector<FrameMatrix> frames(wavs.size());
  parallel_for(wavs.size(), [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const AudioBuffer audio = read_wav(wavs[i]);
      if (audio.sample_rate != cfg.sample_rate)
        throw_data("sample rate mismatch in " + wavs[i]);
      frames[i] = frame_analyze(audio, cfg);
    }
  });
  const CodebookSet books = fit_codebooks(frames, cfg, seed);
  write_codebooks(out_path, books);
}

}  // namespace scve
