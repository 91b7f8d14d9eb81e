#pragma once
// The two token predictors. The AR decoder is causal over the acoustic
// region (text prefix is bidirectional) and predicts stage-1 codes plus EOS.
// The NAR decoder is non-causal, conditioned on the stage id through
// adaptive layer norm, and carries the style network: a learned token bank S
// whose rows are scaled by the control vector c to form the attention keys.
// Models share no parameters.

#include <algorithm>
#include <cstdint>
#include <vector>

#include "scve/codec.hpp"
#include "scve/nn.hpp"
#include "scve/tokenizer.hpp"

namespace scve {

struct ModelConfig {
  int vocab_text = vocab::kSize;
  int codebook_size = 64;  // K
  int d_model = 64;
  int n_heads = 4;
  int ar_blocks = 2;
  int nar_blocks = 3;
  int d_ff = 256;
  int style_tokens = 10;  // N
  int d_style = 32;
  int style_heads = 8;
};

// Control vectors are all-ones during training; at inference every component
// must stay inside [0.5, 2.5].
inline void validate_control(const std::vector<double>& c, int n_tokens) {
  if (static_cast<int>(c.size()) != n_tokens)
    throw_data("control vector length " + std::to_string(c.size()) +
               " does not match style token count " + std::to_string(n_tokens));
  for (std::size_t i = 0; i < c.size(); ++i)
    if (!(c[i] >= 0.5 && c[i] <= 2.5))
      throw ControlOutOfRange(static_cast<int>(i), c[i]);
}

inline std::vector<double> ones_control(int n) {
  return std::vector<double>(static_cast<std::size_t>(n), 1.0);
}

inline bool is_all_ones(const std::vector<double>& c) {
  for (double x : c)
    if (x != 1.0) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Shared decoder block (pre-norm)

template <class T>
struct DecoderBlock {
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;
  AdaNorm<T> norm1, norm2;

  struct Cache {
    typename AdaNorm<T>::Cache n1, n2;
    typename MultiHeadAttention<T>::Cache at;
    typename FeedForward<T>::Cache ff;
    Tensor2<T> normed1, normed2, h;
  };

  void init(ParamStore<T>& ps, const std::string& name, int d, int heads,
            int d_ff, int d_cond, Rng& rng, double stddev) {
    attn.init(ps, name + ".attn", d, d, d, d, heads, rng, stddev);
    ffn.init(ps, name + ".ffn", d, d_ff, rng, stddev);
    norm1.init(ps, name + ".norm1", d, d_cond);
    norm2.init(ps, name + ".norm2", d, d_cond);
  }

  void forward(const Tensor2<T>& x, const std::vector<T>& cond, AttnMask mask,
               int prefix, Tensor2<T>& out, Cache& c) const {
    norm1.forward(x, cond, c.normed1, c.n1);
    Tensor2<T> a;
    attn.forward(c.normed1, c.normed1, c.normed1, mask, prefix, a, c.at);
    c.h = x;
    add_inplace(c.h, a);
    norm2.forward(c.h, cond, c.normed2, c.n2);
    Tensor2<T> f;
    ffn.forward(c.normed2, f, c.ff);
    out = c.h;
    add_inplace(out, f);
  }

  void backward(Cache& c, const Tensor2<T>& dout, AttnMask mask, int prefix,
                Tensor2<T>& dx, std::vector<T>* dcond) {
    Tensor2<T> df;
    ffn.backward(c.ff, dout, df);
    Tensor2<T> dh;
    norm2.backward(c.n2, df, dh, dcond);
    add_inplace(dh, dout);  // residual
    Tensor2<T> dq, dk, dv;
    attn.backward(c.at, dh, mask, prefix, dq, dk, dv);
    add_inplace(dq, dk);
    add_inplace(dq, dv);
    norm1.backward(c.n1, dq, dx, dcond);
    add_inplace(dx, dh);  // residual
  }
};

// ---------------------------------------------------------------------------
// AR model

struct GenerationResult {
  std::vector<int> codes;
  bool truncated = false;
};

template <class T>
struct ARModel {
  ModelConfig cfg;
  ParamStore<T> store;
  Embedding<T> text_emb, audio_emb;
  std::vector<DecoderBlock<T>> blocks;
  AdaNorm<T> final_norm;
  Linear<T> classifier;  // d -> K+1, class K is EOS

  int eos_class() const { return cfg.codebook_size; }

  explicit ARModel(const ModelConfig& config, uint64_t seed) : cfg(config) {
    Rng rng(derive_seed(seed, "ar.init"));
    const double stddev = 0.02;
    text_emb.init(store, "text_emb", cfg.vocab_text, cfg.d_model, rng, stddev);
    audio_emb.init(store, "audio_emb", cfg.codebook_size, cfg.d_model, rng, stddev);
    blocks.resize(cfg.ar_blocks);
    for (int b = 0; b < cfg.ar_blocks; ++b)
      blocks[b].init(store, "block." + std::to_string(b), cfg.d_model,
                     cfg.n_heads, cfg.d_ff, 0, rng, stddev);
    final_norm.init(store, "final_norm", cfg.d_model, 0);
    classifier.init(store, "classifier", cfg.d_model, cfg.codebook_size + 1,
                    rng, stddev);
  }

  struct Cache {
    std::vector<typename DecoderBlock<T>::Cache> blocks;
    typename AdaNorm<T>::Cache fn;
    typename Linear<T>::Cache cls;
    Tensor2<T> hidden;  // final block output
    std::vector<int> text_ids, acoustic_ids;
    int text_len = 0, prompt_len = 0, target_len = 0;
  };

  // Teacher-forced logits: row t predicts target[t], the last row predicts
  // EOS. Rows of the input: [text | prompt codes | target codes].
  void forward(const std::vector<int>& text, const std::vector<int>& prompt,
               const std::vector<int>& target, Tensor2<T>& logits,
               Cache& c) const {
    const int ls = static_cast<int>(text.size());
    const int lp = static_cast<int>(prompt.size());
    const int lt = static_cast<int>(target.size());
    if (ls < 1) throw_data("AR forward: empty phoneme sequence");
    Tensor2<T> x;
    text_emb.forward(text, x);
    std::vector<int> acoustic(prompt);
    acoustic.insert(acoustic.end(), target.begin(), target.end());
    Tensor2<T> ac;
    audio_emb.forward(acoustic, ac);
    const auto pos_t = sinusoidal_positions<T>(ls, cfg.d_model);
    const auto pos_a = sinusoidal_positions<T>(lp + lt, cfg.d_model);
    Tensor2<T> rows(ls + lp + lt, cfg.d_model);
    for (int i = 0; i < ls; ++i)
      for (int j = 0; j < cfg.d_model; ++j)
        rows.at(i, j) = x.at(i, j) + pos_t.at(i, j);
    for (int i = 0; i < lp + lt; ++i)
      for (int j = 0; j < cfg.d_model; ++j)
        rows.at(ls + i, j) = ac.at(i, j) + pos_a.at(i, j);

    c.text_len = ls;
    c.prompt_len = lp;
    c.target_len = lt;
    c.text_ids = text;
    c.acoustic_ids = acoustic;
    c.blocks.resize(blocks.size());
    Tensor2<T> cur = rows;
    const std::vector<T> no_cond;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      Tensor2<T> next;
      blocks[b].forward(cur, no_cond, AttnMask::prefix_causal, ls, next, c.blocks[b]);
      cur = next;
    }
    c.hidden = cur;
    // predictor rows: last prompt (or text) row through the last target row
    Tensor2<T> sel(lt + 1, cfg.d_model);
    for (int i = 0; i <= lt; ++i)
      std::memcpy(sel.row(i), cur.row(ls + lp - 1 + i), sizeof(T) * cfg.d_model);
    Tensor2<T> normed;
    final_norm.forward(sel, no_cond, normed, c.fn);
    classifier.forward(normed, logits, &c.cls);
  }

  // Mean cross entropy over target positions plus EOS; accumulates grads.
  double loss_and_grad(const std::vector<int>& text, const std::vector<int>& prompt,
                       const std::vector<int>& target, double scale = 1.0) {
    Cache c;
    Tensor2<T> logits;
    forward(text, prompt, target, logits, c);
    std::vector<int> labels(target);
    labels.push_back(eos_class());
    Tensor2<T> dlogits;
    const double loss = softmax_xent_mean(logits, labels, dlogits);
    if (scale != 1.0)
      for (auto& g : dlogits.v) g = static_cast<T>(g * scale);
    backward(c, dlogits);
    return loss;
  }

  void backward(Cache& c, const Tensor2<T>& dlogits) {
    Tensor2<T> dnormed;
    classifier.backward(c.cls, dlogits, &dnormed);
    Tensor2<T> dsel;
    final_norm.backward(c.fn, dnormed, dsel, nullptr);
    const int ls = c.text_len, lp = c.prompt_len, lt = c.target_len;
    Tensor2<T> dcur(c.hidden.rows, cfg.d_model);
    for (int i = 0; i <= lt; ++i) {
      T* dst = dcur.row(ls + lp - 1 + i);
      const T* src = dsel.row(i);
      for (int j = 0; j < cfg.d_model; ++j) dst[j] += src[j];
    }
    for (int b = static_cast<int>(blocks.size()) - 1; b >= 0; --b) {
      Tensor2<T> dprev;
      blocks[b].backward(c.blocks[b], dcur, AttnMask::prefix_causal, ls, dprev,
                         nullptr);
      dcur = dprev;
    }
    Tensor2<T> dtext(ls, cfg.d_model);
    for (int i = 0; i < ls; ++i)
      std::memcpy(dtext.row(i), dcur.row(i), sizeof(T) * cfg.d_model);
    Tensor2<T> dac(lp + lt, cfg.d_model);
    for (int i = 0; i < lp + lt; ++i)
      std::memcpy(dac.row(i), dcur.row(ls + i), sizeof(T) * cfg.d_model);
    text_emb.backward(c.text_ids, dtext);
    audio_emb.backward(c.acoustic_ids, dac);
  }

  // Teacher-forced argmax accuracy over target positions + EOS.
  void accuracy(const std::vector<int>& text, const std::vector<int>& prompt,
                const std::vector<int>& target, std::size_t& correct,
                std::size_t& total) const {
    Cache c;
    Tensor2<T> logits;
    forward(text, prompt, target, logits, c);
    std::vector<int> labels(target);
    labels.push_back(eos_class());
    for (int r = 0; r < logits.rows; ++r) {
      if (argmax_row(logits, r) == labels[r]) ++correct;
      ++total;
    }
  }

  // Sampling with a per-block KV cache; bitwise identical to the batch path.
  GenerationResult generate(const std::vector<int>& text,
                            const std::vector<int>& prompt, double tau,
                            Rng& rng, int max_len) const;
};

// ---------------------------------------------------------------------------
// NAR model + style network

template <class T>
struct NARModel {
  ModelConfig cfg;
  ParamStore<T> store;
  Embedding<T> text_emb;
  std::vector<Embedding<T>> prompt_emb;  // one table per RVQ stage
  Param<T> style_bank;                   // S: N x D_s
  Linear<T> style_q;                     // D_m -> D_s
  Linear<T> style_out;                   // D_s -> D_m
  Embedding<T> stage_emb;                // 7 rows, stage ids 2..8
  std::vector<DecoderBlock<T>> blocks;
  AdaNorm<T> final_norm;
  Linear<T> classifier;  // d -> K

  explicit NARModel(const ModelConfig& config, uint64_t seed) : cfg(config) {
    if (cfg.d_style % cfg.style_heads != 0)
      throw_data("style dim must be divisible by style head count");
    Rng rng(derive_seed(seed, "nar.init"));
    const double stddev = 0.02;
    text_emb.init(store, "text_emb", cfg.vocab_text, cfg.d_model, rng, stddev);
    prompt_emb.resize(kRvqStages);
    for (int s = 0; s < kRvqStages; ++s)
      prompt_emb[s].init(store, "prompt_emb." + std::to_string(s + 1),
                         cfg.codebook_size, cfg.d_model, rng, stddev);
    style_bank.name = "style.bank";
    style_bank.w.resize(cfg.style_tokens, cfg.d_style);
    style_bank.g.resize(cfg.style_tokens, cfg.d_style);
    init_normal(style_bank.w, rng, 0.5 / std::sqrt(static_cast<double>(cfg.d_style)));
    store.add(&style_bank);
    style_q.init(store, "style.q", cfg.d_model, cfg.d_style, rng, stddev);
    style_out.init(store, "style.out", cfg.d_style, cfg.d_model, rng, stddev);
    stage_emb.init(store, "stage_emb", kRvqStages - 1, cfg.d_model, rng, stddev);
    blocks.resize(cfg.nar_blocks);
    for (int b = 0; b < cfg.nar_blocks; ++b)
      blocks[b].init(store, "block." + std::to_string(b), cfg.d_model,
                     cfg.n_heads, cfg.d_ff, cfg.d_model, rng, stddev);
    final_norm.init(store, "final_norm", cfg.d_model, cfg.d_model);
    classifier.init(store, "classifier", cfg.d_model, cfg.codebook_size, rng,
                    stddev);
  }

  // K = c (x) S, exact elementwise products.
  Tensor2<T> scale_tokens(const std::vector<double>& c) const {
    validate_control(c, cfg.style_tokens);
    Tensor2<T> k(cfg.style_tokens, cfg.d_style);
    for (int i = 0; i < cfg.style_tokens; ++i) {
      const T ci = static_cast<T>(c[i]);
      const T* s = style_bank.w.row(i);
      T* kr = k.row(i);
      for (int j = 0; j < cfg.d_style; ++j) kr[j] = ci * s[j];
    }
    return k;
  }

  struct StyleCache {
    Tensor2<T> base;  // acoustic base A
    typename Linear<T>::Cache cq;
    Tensor2<T> q;
    Tensor2<T> keys;
    std::vector<Tensor2<T>> att;
    Tensor2<T> ctx;
    typename Linear<T>::Cache cout;
    std::vector<double> c;
    bool bypass = false;
    int d = 0;
  };

  static void check_stage(int d) {
    if (d < 2 || d > kRvqStages)
      throw_data("invalid stage: d must be in 2..8, got " + std::to_string(d));
  }

  // Y = A + Linear(Attention(q(A), c (x) S, S)); length L_t, width d_model.
  void style_forward(const QuantizedTokenGrid& grid, int d,
                     const std::vector<double>& c, bool bypass_scaling,
                     Tensor2<T>& y, StyleCache& sc) const {
    check_stage(d);
    sc.d = d;
    sc.c = c;
    sc.bypass = bypass_scaling;
    const int L = grid.num_frames;
    sc.base.resize(L, cfg.d_model);
    for (int s = 0; s + 1 < d; ++s)
      prompt_emb[s].forward_add(grid.codes[s], sc.base);

    style_q.forward(sc.base, sc.q, &sc.cq);
    sc.keys = bypass_scaling ? style_bank.w : scale_tokens(c);
    const Tensor2<T>& values = style_bank.w;
    const int n = cfg.style_tokens;
    const int hs = cfg.style_heads;
    const int dh = cfg.d_style / hs;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    sc.att.assign(hs, Tensor2<T>());
    sc.ctx.resize(L, cfg.d_style);
    for (int h = 0; h < hs; ++h) {
      Tensor2<T>& att = sc.att[h];
      att.resize(L, n);
      const int off = h * dh;
      for (int i = 0; i < L; ++i) {
        const T* qi = sc.q.row(i) + off;
        T* ai = att.row(i);
        double mx = -1e300;
        for (int j = 0; j < n; ++j) {
          const T* kj = sc.keys.row(j) + off;
          double s = 0.0;
          for (int t = 0; t < dh; ++t) s += static_cast<double>(qi[t]) * kj[t];
          s *= scale;
          ai[j] = static_cast<T>(s);
          mx = std::max(mx, s);
        }
        double denom = 0.0;
        for (int j = 0; j < n; ++j) {
          const double e = std::exp(static_cast<double>(ai[j]) - mx);
          ai[j] = static_cast<T>(e);
          denom += e;
        }
        T* ctx = sc.ctx.row(i) + off;
        for (int t = 0; t < dh; ++t) ctx[t] = T(0);
        for (int j = 0; j < n; ++j) {
          const T a = static_cast<T>(ai[j] / denom);
          ai[j] = a;
          const T* vj = values.row(j) + off;
          for (int t = 0; t < dh; ++t) ctx[t] += a * vj[t];
        }
      }
    }
    style_out.forward(sc.ctx, y, &sc.cout);
    add_inplace(y, sc.base);
  }

  void style_backward(StyleCache& sc, const QuantizedTokenGrid& grid,
                      const Tensor2<T>& dy) {
    Tensor2<T> dctx;
    style_out.backward(sc.cout, dy, &dctx);
    const int L = sc.base.rows;
    const int n = cfg.style_tokens;
    const int hs = cfg.style_heads;
    const int dh = cfg.d_style / hs;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor2<T> dq(L, cfg.d_style), dkeys(n, cfg.d_style);
    const Tensor2<T>& values = style_bank.w;
    for (int h = 0; h < hs; ++h) {
      const Tensor2<T>& att = sc.att[h];
      const int off = h * dh;
      for (int i = 0; i < L; ++i) {
        const T* ai = att.row(i);
        const T* dci = dctx.row(i) + off;
        double dot = 0.0;
        std::vector<double> datt(n, 0.0);
        for (int j = 0; j < n; ++j) {
          const T* vj = values.row(j) + off;
          T* dvj = style_bank.g.row(j) + off;
          double da = 0.0;
          for (int t = 0; t < dh; ++t) {
            da += static_cast<double>(dci[t]) * vj[t];
            dvj[t] += ai[j] * dci[t];  // values are S directly
          }
          datt[j] = da;
          dot += da * ai[j];
        }
        const T* qi = sc.q.row(i) + off;
        T* dqi = dq.row(i) + off;
        for (int j = 0; j < n; ++j) {
          const double ds = (datt[j] - dot) * ai[j] * scale;
          const T* kj = sc.keys.row(j) + off;
          T* dkj = dkeys.row(j) + off;
          for (int t = 0; t < dh; ++t) {
            dqi[t] += static_cast<T>(ds) * kj[t];
            dkj[t] += static_cast<T>(ds) * qi[t];
          }
        }
      }
    }
    // keys = c (x) S (or S when bypassed)
    for (int j = 0; j < n; ++j) {
      const T cj = sc.bypass ? T(1) : static_cast<T>(sc.c[j]);
      T* sg = style_bank.g.row(j);
      const T* dkj = dkeys.row(j);
      for (int t = 0; t < cfg.d_style; ++t) sg[t] += cj * dkj[t];
    }
    Tensor2<T> dbase;
    style_q.backward(sc.cq, dq, &dbase);
    add_inplace(dbase, dy);  // residual path into A
    for (int s = 0; s + 1 < sc.d; ++s)
      prompt_emb[s].backward(grid.codes[s], dbase);
  }

  // Head-averaged softmax weights over the N tokens (diagnostics / sweeps).
  Tensor2<double> style_attention_weights(const QuantizedTokenGrid& grid, int d,
                                          const std::vector<double>& c) const {
    StyleCache sc;
    Tensor2<T> y;
    style_forward(grid, d, c, false, y, sc);
    Tensor2<double> out(grid.num_frames, cfg.style_tokens);
    for (int h = 0; h < cfg.style_heads; ++h)
      for (int i = 0; i < grid.num_frames; ++i)
        for (int j = 0; j < cfg.style_tokens; ++j)
          out.at(i, j) += static_cast<double>(sc.att[h].at(i, j)) / cfg.style_heads;
    return out;
  }

  // Head-averaged pre-softmax scores; linear in each c_i by construction.
  Tensor2<double> style_attention_scores(const QuantizedTokenGrid& grid, int d,
                                         const std::vector<double>& c) const {
    check_stage(d);
    validate_control(c, cfg.style_tokens);
    const int L = grid.num_frames;
    Tensor2<T> base(L, cfg.d_model);
    for (int s = 0; s + 1 < d; ++s)
      prompt_emb[s].forward_add(grid.codes[s], base);
    Tensor2<T> q;
    typename Linear<T>::Cache cq;
    style_q.forward(base, q, &cq);
    const Tensor2<T> keys = scale_tokens(c);
    const int hs = cfg.style_heads;
    const int dh = cfg.d_style / hs;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor2<double> out(L, cfg.style_tokens);
    for (int h = 0; h < hs; ++h) {
      const int off = h * dh;
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < cfg.style_tokens; ++j) {
          double s = 0.0;
          const T* qi = q.row(i) + off;
          const T* kj = keys.row(j) + off;
          for (int t = 0; t < dh; ++t) s += static_cast<double>(qi[t]) * kj[t];
          out.at(i, j) += s * scale / hs;
        }
    }
    return out;
  }

  struct Cache {
    StyleCache style;
    std::vector<typename DecoderBlock<T>::Cache> blocks;
    typename AdaNorm<T>::Cache fn;
    typename Linear<T>::Cache cls;
    std::vector<T> cond;
    std::vector<int> text;
    int text_len = 0, ac_len = 0, d = 0;
  };

  // Logits (L_t x K) for stage d given stages < d, the text and the control
  // vector. Only the acoustic rows reach the classifier.
  void forward(const std::vector<int>& text, const QuantizedTokenGrid& grid,
               int d, const std::vector<double>& c, bool bypass_scaling,
               Tensor2<T>& logits, Cache& cc) const {
    check_stage(d);
    if (!bypass_scaling) validate_control(c, cfg.style_tokens);
    const int ls = static_cast<int>(text.size());
    const int L = grid.num_frames;
    if (ls < 1) throw_data("NAR forward: empty phoneme sequence");
    if (L < 1) throw_data("NAR forward: empty token grid");
    cc.text = text;
    cc.text_len = ls;
    cc.ac_len = L;
    cc.d = d;

    Tensor2<T> y;
    style_forward(grid, d, c, bypass_scaling, y, cc.style);

    Tensor2<T> tx;
    text_emb.forward(text, tx);
    const auto pos_t = sinusoidal_positions<T>(ls, cfg.d_model);
    const auto pos_a = sinusoidal_positions<T>(L, cfg.d_model);
    Tensor2<T> rows(ls + L, cfg.d_model);
    for (int i = 0; i < ls; ++i)
      for (int j = 0; j < cfg.d_model; ++j)
        rows.at(i, j) = tx.at(i, j) + pos_t.at(i, j);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < cfg.d_model; ++j)
        rows.at(ls + i, j) = y.at(i, j) + pos_a.at(i, j);

    std::vector<int> stage_id{d - 2};
    Tensor2<T> cond_row;
    stage_emb.forward(stage_id, cond_row);
    cc.cond.assign(cond_row.v.begin(), cond_row.v.end());

    cc.blocks.resize(blocks.size());
    Tensor2<T> cur = rows;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      Tensor2<T> next;
      blocks[b].forward(cur, cc.cond, AttnMask::none, 0, next, cc.blocks[b]);
      cur = next;
    }
    // post processing: keep the acoustic region
    Tensor2<T> sel(L, cfg.d_model);
    for (int i = 0; i < L; ++i)
      std::memcpy(sel.row(i), cur.row(ls + i), sizeof(T) * cfg.d_model);
    Tensor2<T> normed;
    final_norm.forward(sel, cc.cond, normed, cc.fn);
    classifier.forward(normed, logits, &cc.cls);
  }

  // Training loss for one uniformly sampled stage d; c must be all-ones.
  double loss_and_grad(const std::vector<int>& text, const QuantizedTokenGrid& grid,
                       int d, const std::vector<double>& c, double scale = 1.0) {
    if (!is_all_ones(c))
      throw_data("training requires the all-ones control vector");
    Cache cc;
    Tensor2<T> logits;
    forward(text, grid, d, c, false, logits, cc);
    Tensor2<T> dlogits;
    const double loss = softmax_xent_mean(logits, grid.codes[d - 1], dlogits);
    if (scale != 1.0)
      for (auto& g : dlogits.v) g = static_cast<T>(g * scale);
    backward(cc, grid, dlogits);
    return loss;
  }

  void backward(Cache& cc, const QuantizedTokenGrid& grid, const Tensor2<T>& dlogits) {
    Tensor2<T> dnormed;
    classifier.backward(cc.cls, dlogits, &dnormed);
    std::vector<T> dcond(cfg.d_model, T(0));
    Tensor2<T> dsel;
    final_norm.backward(cc.fn, dnormed, dsel, &dcond);
    const int ls = cc.text_len, L = cc.ac_len;
    Tensor2<T> dcur(ls + L, cfg.d_model);
    for (int i = 0; i < L; ++i)
      std::memcpy(dcur.row(ls + i), dsel.row(i), sizeof(T) * cfg.d_model);
    for (int b = static_cast<int>(blocks.size()) - 1; b >= 0; --b) {
      Tensor2<T> dprev;
      blocks[b].backward(cc.blocks[b], dcur, AttnMask::none, 0, dprev, &dcond);
      dcur = dprev;
    }
    std::vector<int> stage_id{cc.d - 2};
    Tensor2<T> dcond_row(1, cfg.d_model);
    std::memcpy(dcond_row.row(0), dcond.data(), sizeof(T) * cfg.d_model);
    stage_emb.backward(stage_id, dcond_row);

    Tensor2<T> dtext(ls, cfg.d_model);
    for (int i = 0; i < ls; ++i)
      std::memcpy(dtext.row(i), dcur.row(i), sizeof(T) * cfg.d_model);
    text_emb.backward(cc.text, dtext);
    Tensor2<T> dy(L, cfg.d_model);
    for (int i = 0; i < L; ++i)
      std::memcpy(dy.row(i), dcur.row(ls + i), sizeof(T) * cfg.d_model);
    style_backward(cc.style, grid, dy);
  }

  std::vector<int> argmax_codes(const std::vector<int>& text,
                                const QuantizedTokenGrid& grid, int d,
                                const std::vector<double>& c,
                                bool bypass_scaling = false) const {
    Cache cc;
    Tensor2<T> logits;
    forward(text, grid, d, c, bypass_scaling, logits, cc);
    std::vector<int> out(grid.num_frames);
    for (int t = 0; t < grid.num_frames; ++t) out[t] = argmax_row(logits, t);
    return out;
  }

  void accuracy(const std::vector<int>& text, const QuantizedTokenGrid& grid,
                int d, std::size_t& correct, std::size_t& total) const {
    Cache cc;
    Tensor2<T> logits;
    forward(text, grid, d, ones_control(cfg.style_tokens), false, logits, cc);
    for (int t = 0; t < grid.num_frames; ++t) {
      if (argmax_row(logits, t) == grid.codes[d - 1][t]) ++correct;
      ++total;
    }
  }
};

// ---------------------------------------------------------------------------
// AR generation (KV cache)

template <class T>
GenerationResult ARModel<T>::generate(const std::vector<int>& text,
                                      const std::vector<int>& prompt, double tau,
                                      Rng& rng, int max_len) const {
  if (!(tau > 0.0)) throw_data("sampling temperature must be positive");
  if (max_len < 1) throw_data("max_len must be at least 1");
  const int ls = static_cast<int>(text.size());
  const int lp = static_cast<int>(prompt.size());
  if (ls < 1) throw_data("AR generate: empty phoneme sequence");
  const std::vector<T> no_cond;

  // Bulk pass over the text prefix, keeping each block's projected k/v.
  struct BlockKV {
    Tensor2<T> k, v;
    int len = 0;
  };
  std::vector<BlockKV> kv(blocks.size());
  const int cap = ls + lp + max_len;
  for (auto& b : kv) {
    b.k.resize(cap, cfg.d_model);
    b.v.resize(cap, cfg.d_model);
  }

  Tensor2<T> tx;
  text_emb.forward(text, tx);
  const auto pos_t = sinusoidal_positions<T>(ls, cfg.d_model);
  for (int i = 0; i < ls; ++i)
    for (int j = 0; j < cfg.d_model; ++j) tx.at(i, j) += pos_t.at(i, j);

  Tensor2<T> cur = tx;
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    typename DecoderBlock<T>::Cache cache;
    Tensor2<T> next;
    blocks[b].forward(cur, no_cond, AttnMask::none, 0, next, cache);
    for (int i = 0; i < ls; ++i) {
      std::memcpy(kv[b].k.row(i), cache.at.k.row(i), sizeof(T) * cfg.d_model);
      std::memcpy(kv[b].v.row(i), cache.at.v.row(i), sizeof(T) * cfg.d_model);
    }
    kv[b].len = ls;
    cur = next;
  }
  std::vector<T> last_hidden(cur.row(ls - 1), cur.row(ls - 1) + cfg.d_model);

  const auto pos_a = sinusoidal_positions<T>(lp + max_len, cfg.d_model);
  const int dh = cfg.d_model / cfg.n_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  // One incremental row through all blocks, appending to the kv caches.
  auto step = [&](const std::vector<T>& row_in) {
    Tensor2<T> x(1, cfg.d_model);
    std::memcpy(x.row(0), row_in.data(), sizeof(T) * cfg.d_model);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const DecoderBlock<T>& blk = blocks[b];
      typename AdaNorm<T>::Cache nc;
      Tensor2<T> n1;
      blk.norm1.forward(x, no_cond, n1, nc);
      Tensor2<T> q, k, v;
      blk.attn.wq.forward(n1, q, nullptr);
      blk.attn.wk.forward(n1, k, nullptr);
      blk.attn.wv.forward(n1, v, nullptr);
      BlockKV& bkv = kv[b];
      std::memcpy(bkv.k.row(bkv.len), k.row(0), sizeof(T) * cfg.d_model);
      std::memcpy(bkv.v.row(bkv.len), v.row(0), sizeof(T) * cfg.d_model);
      bkv.len++;
      Tensor2<T> ctx(1, cfg.d_model);
      std::vector<T> att(static_cast<std::size_t>(bkv.len));
      for (int h = 0; h < cfg.n_heads; ++h) {
        const int off = h * dh;
        const T* qh = q.row(0) + off;
        double mx = -1e300;
        for (int j = 0; j < bkv.len; ++j) {
          const T* kj = bkv.k.row(j) + off;
          double s = 0.0;
          for (int t = 0; t < dh; ++t) s += static_cast<double>(qh[t]) * kj[t];
          s *= scale;
          att[j] = static_cast<T>(s);
          if (s > mx) mx = s;
        }
        double denom = 0.0;
        for (int j = 0; j < bkv.len; ++j) {
          const double e = std::exp(static_cast<double>(att[j]) - mx);
          att[j] = static_cast<T>(e);
          denom += e;
        }
        T* ch = ctx.row(0) + off;
        for (int t = 0; t < dh; ++t) ch[t] = T(0);
        for (int j = 0; j < bkv.len; ++j) {
          const T a = static_cast<T>(att[j] / denom);
          const T* vj = bkv.v.row(j) + off;
          for (int t = 0; t < dh; ++t) ch[t] += a * vj[t];
        }
      }
      Tensor2<T> attn_out;
      blk.attn.wo.forward(ctx, attn_out, nullptr);
      Tensor2<T> h = x;
      add_inplace(h, attn_out);
      Tensor2<T> n2;
      blk.norm2.forward(h, no_cond, n2, nc);
      typename FeedForward<T>::Cache fc;
      Tensor2<T> f;
      blk.ffn.forward(n2, f, fc);
      x = h;
      add_inplace(x, f);
    }
    std::memcpy(last_hidden.data(), x.row(0), sizeof(T) * cfg.d_model);
  };

  auto feed_code = [&](int code, int acoustic_pos) {
    std::vector<T> row(cfg.d_model);
    if (code < 0 || code >= cfg.codebook_size)
      throw_data("AR generate: prompt code out of range");
    const T* emb = audio_emb.table.w.row(code);
    const T* pos = pos_a.row(acoustic_pos);
    for (int j = 0; j < cfg.d_model; ++j) row[j] = emb[j] + pos[j];
    step(row);
  };

  for (int i = 0; i < lp; ++i) feed_code(prompt[i], i);

  GenerationResult result;
  for (;;) {
    Tensor2<T> hid(1, cfg.d_model);
    std::memcpy(hid.row(0), last_hidden.data(), sizeof(T) * cfg.d_model);
    typename AdaNorm<T>::Cache nc;
    Tensor2<T> normed;
    final_norm.forward(hid, no_cond, normed, nc);
    Tensor2<T> logits;
    classifier.forward(normed, logits, nullptr);
    std::vector<T> row(logits.row(0), logits.row(0) + logits.cols);
    const int tok = softmax_sample(row, tau, rng);
    if (tok == eos_class()) break;
    result.codes.push_back(tok);
    if (static_cast<int>(result.codes.size()) >= max_len) {
      result.truncated = true;
      break;
    }
    feed_code(tok, lp + static_cast<int>(result.codes.size()) - 1);
  }
  return result;
}

}  // namespace scve
