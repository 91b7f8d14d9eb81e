// scve command line: tokenize | codec {fit,encode,decode} | corpus generate |
// train | synthesize | style-sweep | eval {wer,f0,summary}
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric fault.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "scve/pipeline.hpp"
#include "scve/tokenizer.hpp"

namespace {

using namespace scve;

RunConfig build_config(const std::string& preset, const std::string& config_file,
                       const std::vector<std::string>& overrides,
                       uint64_t seed, bool seed_given) {
  RunConfig cfg = preset_config(preset);
  if (!config_file.empty()) cfg = load_config_file(config_file, cfg);
  int lineno = 0;
  for (const auto& kv : overrides) apply_config_line(cfg, kv, ++lineno);
  if (seed_given) cfg.seed = seed;
  return cfg;
}

const char* class_name(TokenClass cls) {
  switch (cls) {
    case TokenClass::pad: return "pad";
    case TokenClass::bos: return "bos";
    case TokenClass::eos: return "eos";
    case TokenClass::space: return "space";
    case TokenClass::punct: return "punct";
    case TokenClass::latin: return "latin";
    case TokenClass::digit: return "digit";
    case TokenClass::initial: return "initial";
    case TokenClass::medial: return "medial";
    case TokenClass::final_: return "final";
  }
  return "?";
}

void emit_token_line(std::ostream& os, const std::string& line) {
  const PhonemeSequence seq = tokenize(line);
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    if (i) os << ' ';
    os << seq.tokens[i];
  }
  os << '\n';
}

int run(int argc, char** argv) {
  CLI::App app{"style-controllable codec-token speech pipeline"};
  app.require_subcommand(1);

  // shared config options, registered per subcommand that builds models
  struct CfgArgs {
    std::string preset = "desk";
    std::string config_file;
    std::vector<std::string> overrides;
    uint64_t seed = 1;
    bool seed_given = false;
  };
  auto add_cfg = [](CLI::App* cmd, CfgArgs& a) {
    cmd->add_option("--preset", a.preset, "configuration preset: desk | paper-scale");
    cmd->add_option("--config", a.config_file, "key = value config file");
    cmd->add_option("--set", a.overrides, "inline override, e.g. --set 'seed = 7'");
    cmd->add_option("--seed", a.seed, "master seed")
        ->each([&a](const std::string&) { a.seed_given = true; });
  };

  // ---- tokenize
  auto* tok = app.add_subcommand("tokenize", "jamo-decompose text into token ids");
  std::string tok_text, tok_in, tok_out;
  bool dump_vocab = false;
  tok->add_option("--text", tok_text, "text to tokenize");
  tok->add_option("--in", tok_in, "input file, one line per utterance");
  tok->add_option("--out", tok_out, "output file (default stdout)");
  tok->add_flag("--dump-vocab", dump_vocab, "print id<TAB>class<TAB>glyph table");
  tok->callback([&] {
    std::ofstream file;
    std::ostream* os = &std::cout;
    if (!tok_out.empty()) {
      file.open(tok_out, std::ios::trunc);
      if (!file) throw_data("cannot write " + tok_out);
      os = &file;
    }
    if (dump_vocab) {
      for (const auto& e : vocabulary_table())
        *os << e.id << '\t' << class_name(e.cls) << '\t' << e.glyph << '\n';
      return;
    }
    if (!tok_text.empty()) {
      emit_token_line(*os, tok_text);
      return;
    }
    if (tok_in.empty())
      throw_usage("tokenize needs --text, --in or --dump-vocab");
    std::ifstream in(tok_in);
    if (!in) throw_data("cannot open " + tok_in);
    std::string line;
    while (std::getline(in, line)) emit_token_line(*os, line);
  });

  // ---- codec
  auto* codec = app.add_subcommand("codec", "frame codec and RVQ codebooks");
  codec->require_subcommand(1);

  auto* fit = codec->add_subcommand("fit", "fit RVQ codebooks over a wav corpus");
  std::string fit_corpus, fit_out;
  CfgArgs fit_cfg;
  fit->add_option("--corpus", fit_corpus, "directory scanned for *.wav")->required();
  fit->add_option("--out", fit_out, "output codebook file")->required();
  add_cfg(fit, fit_cfg);
  fit->callback([&] {
    const RunConfig cfg = build_config(fit_cfg.preset, fit_cfg.config_file,
                                       fit_cfg.overrides, fit_cfg.seed,
                                       fit_cfg.seed_given);
    cmd_codec_fit(fit_corpus, fit_out, cfg.codec, cfg.seed);
    std::printf("wrote %s\n", fit_out.c_str());
  });

  auto* enc = codec->add_subcommand("encode", "wav -> .codes");
  std::string enc_wav, enc_books, enc_out;
  enc->add_option("--wav", enc_wav)->required();
  enc->add_option("--books", enc_books)->required();
  enc->add_option("--out", enc_out)->required();
  enc->callback([&] {
    const CodebookSet books = read_codebooks(enc_books);
    const AudioBuffer audio = read_wav(enc_wav);
    if (audio.sample_rate != books.cfg.sample_rate)
      throw_data("sample rate mismatch between wav and codebooks");
    write_codes(enc_out, rvq_encode(frame_analyze(audio, books.cfg), books));
    std::printf("wrote %s\n", enc_out.c_str());
  });

  auto* dec = codec->add_subcommand("decode", ".codes -> wav");
  std::string dec_codes, dec_books, dec_out;
  int dec_stages = kRvqStages;
  dec->add_option("--codes", dec_codes)->required();
  dec->add_option("--books", dec_books)->required();
  dec->add_option("--out", dec_out)->required();
  dec->add_option("--stages", dec_stages, "decode with the first n stages");
  dec->callback([&] {
    const CodebookSet books = read_codebooks(dec_books);
    const QuantizedTokenGrid grid = read_codes(dec_codes);
    write_wav(dec_out, frame_synthesize(rvq_decode(grid, books, dec_stages), books.cfg));
    std::printf("wrote %s\n", dec_out.c_str());
  });

  // ---- corpus
  auto* corpus = app.add_subcommand("corpus", "synthetic corpus");
  corpus->require_subcommand(1);
  auto* gen = corpus->add_subcommand("generate", "generate wavs + manifest.csv");
  CorpusGenerateOptions gen_opt;
  gen->add_option("--n", gen_opt.count, "number of utterances")->required();
  gen->add_option("--seed", gen_opt.seed, "corpus seed");
  gen->add_option("--out", gen_opt.out_dir, "output directory")->required();
  gen->callback([&] {
    const std::string manifest = cmd_corpus_generate(gen_opt);
    std::printf("wrote %s\n", manifest.c_str());
  });

  // ---- train
  auto* train = app.add_subcommand("train", "train the AR and NAR models");
  std::string train_manifest, train_books, train_out, train_resume;
  int64_t train_steps = 1000;
  CfgArgs train_cfg;
  train->add_option("--manifest", train_manifest)->required();
  train->add_option("--books", train_books)->required();
  train->add_option("--out", train_out, "output directory")->required();
  train->add_option("--steps", train_steps, "total optimization steps");
  train->add_option("--resume", train_resume, "checkpoint to resume from");
  add_cfg(train, train_cfg);
  train->callback([&] {
    TrainOptions opt;
    opt.cfg = build_config(train_cfg.preset, train_cfg.config_file,
                           train_cfg.overrides, train_cfg.seed,
                           train_cfg.seed_given);
    opt.manifest_path = train_manifest;
    opt.books_path = train_books;
    opt.out_dir = train_out;
    opt.steps = train_steps;
    opt.resume_from = train_resume;
    const TrainReport report = cmd_train(opt);
    std::printf("trained to step %lld: ar_loss %.4f nar_loss %.4f\n",
                static_cast<long long>(report.final_step), report.final_ar_loss,
                report.final_nar_loss);
    std::printf("held-out: ar_acc %.4f nar_acc_min %.4f nar_acc_mean %.4f\n",
                report.final_eval.ar_acc, report.final_eval.nar_acc_min,
                report.final_eval.nar_acc_mean);
    std::printf("checkpoint: %s\n", report.final_checkpoint.c_str());
  });

  // ---- synthesize
  auto* synth = app.add_subcommand("synthesize", "text + prompt -> wav");
  SynthesizeOptions syn_opt;
  std::string syn_replay;
  synth->add_option("--checkpoint", syn_opt.checkpoint_path);
  synth->add_option("--config", syn_opt.config_path,
                    "defaults to config.cfg next to the checkpoint");
  synth->add_option("--books", syn_opt.books_path);
  synth->add_option("--text", syn_opt.text);
  synth->add_option("--prompt-wav", syn_opt.prompt_wav);
  synth->add_option("--control", syn_opt.control,
                    "style control values c_1..c_N, each in [0.5, 2.5]");
  synth->add_flag("--baseline", syn_opt.baseline, "force c = all-ones");
  synth->add_option("--seed", syn_opt.seed);
  synth->add_option("--temperature", syn_opt.temperature);
  synth->add_option("--out", syn_opt.out_wav);
  synth->add_option("--replay", syn_replay, "re-run a synthesis from its sidecar");
  synth->callback([&] {
    SynthesizeReport report;
    if (!syn_replay.empty()) {
      report = cmd_replay(syn_replay, syn_opt.out_wav);
    } else {
      if (syn_opt.checkpoint_path.empty() || syn_opt.books_path.empty() ||
          syn_opt.text.empty() || syn_opt.prompt_wav.empty() ||
          syn_opt.out_wav.empty())
        throw_usage("synthesize needs --checkpoint, --books, --text, "
                    "--prompt-wav and --out (or --replay)");
      if (syn_opt.control.empty() && !syn_opt.baseline)
        throw_usage("pass --control c_1..c_N or --baseline");
      report = cmd_synthesize(syn_opt);
    }
    std::printf("wrote %s (hash %s)%s\n", report.out_wav.c_str(),
                hash_hex(report.out_wav_hash).c_str(),
                report.truncated ? " [truncated]" : "");
    std::printf("mean_f0 %.2f Hz, duration %.3f s, rms %.4f\n",
                report.summary.mean_f0_hz, report.summary.total_duration_sec,
                report.summary.rms);
  });

  // ---- style-sweep
  auto* sweep = app.add_subcommand("style-sweep",
                                   "synthesize across control values for one token");
  StyleSweepOptions sw_opt;
  sweep->add_option("--checkpoint", sw_opt.checkpoint_path)->required();
  sweep->add_option("--config", sw_opt.config_path);
  sweep->add_option("--books", sw_opt.books_path)->required();
  sweep->add_option("--text", sw_opt.text)->required();
  sweep->add_option("--prompt-wav", sw_opt.prompt_wav)->required();
  sweep->add_option("--token", sw_opt.token, "1-based style token index")->required();
  sweep->add_option("--values", sw_opt.values, "control values to sweep")
      ->required()
      ->delimiter(',');
  sweep->add_option("--seed", sw_opt.seed);
  sweep->add_option("--temperature", sw_opt.temperature);
  sweep->add_option("--out", sw_opt.out_dir, "output directory")->required();
  sweep->callback([&] {
    const StyleSweepReport report = cmd_style_sweep(sw_opt);
    std::printf("value     mean_f0    duration   rms      voiced\n");
    for (const auto& r : report.rows)
      std::printf("%-9g %-10.2f %-10.3f %-8.4f %.3f\n", r.value, r.mean_f0,
                  r.duration, r.rms, r.voiced_fraction);
    std::printf("table: %s\n", report.table_path.c_str());
  });

  // ---- eval
  auto* eval = app.add_subcommand("eval", "objective metrics");
  eval->require_subcommand(1);

  auto* wer = eval->add_subcommand("wer", "word error rate between transcripts");
  std::string wer_ref, wer_hyp, wer_csv;
  wer->add_option("--ref", wer_ref)->required();
  wer->add_option("--hyp", wer_hyp)->required();
  wer->add_option("--csv", wer_csv);
  wer->callback([&] {
    const WERBreakdown w = cmd_eval_wer(wer_ref, wer_hyp, wer_csv);
    std::printf("WER=%.6f S=%d D=%d I=%d N=%d\n", w.wer, w.substitutions,
                w.deletions, w.insertions, w.reference_words);
  });

  auto* f0 = eval->add_subcommand("f0", "FVE and F0GPE between two wavs");
  std::string f0_ref, f0_syn, f0_csv, f0_tracks;
  f0->add_option("--ref", f0_ref)->required();
  f0->add_option("--syn", f0_syn)->required();
  f0->add_option("--csv", f0_csv);
  f0->add_option("--dump-tracks", f0_tracks, "prefix for .ref.csv/.syn.csv dumps");
  f0->callback([&] {
    const EvalF0Report r = cmd_eval_f0(f0_ref, f0_syn, f0_csv, f0_tracks);
    std::printf("%s\n", r.line.c_str());
  });

  auto* summary = eval->add_subcommand("summary", "acoustic summary of one wav");
  std::string sum_wav, sum_out, sum_mel;
  CfgArgs sum_cfg;
  summary->add_option("--wav", sum_wav)->required();
  summary->add_option("--out", sum_out, "stats csv")->required();
  summary->add_option("--mel", sum_mel, "optional mel csv");
  add_cfg(summary, sum_cfg);
  summary->callback([&] {
    const RunConfig cfg = build_config(sum_cfg.preset, sum_cfg.config_file,
                                       sum_cfg.overrides, sum_cfg.seed,
                                       sum_cfg.seed_given);
    const AcousticSummary s = cmd_eval_summary(sum_wav, sum_out, sum_mel, cfg.codec);
    std::printf("mean_f0=%.2fHz voiced=%.3fs total=%.3fs rms=%.4f\n",
                s.mean_f0_hz, s.voiced_duration_sec, s.total_duration_sec, s.rms);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const scve::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    switch (e.kind()) {
      case scve::ErrorKind::usage: return 2;
      case scve::ErrorKind::data: return 3;
      case scve::ErrorKind::numeric: return 4;
    }
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
