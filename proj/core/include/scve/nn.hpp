#pragma once
// Differentiable layer kernel. No autograd graph: every layer exposes an
// explicit forward that fills a cache and a backward that consumes it.
// Parameters live in the layers and register themselves with a ParamStore;
// gradients accumulate until the store is zeroed. forward() is const and all
// transient state sits in caller-owned caches, so inference with shared
// parameters is safe from multiple threads.

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "scve/common.hpp"
#include "scve/tensor.hpp"

namespace scve {

template <class T>
struct Param {
  std::string name;
  Tensor2<T> w;
  Tensor2<T> g;
};

template <class T>
class ParamStore {
 public:
  void add(Param<T>* p) {
    if (!by_name_.emplace(p->name, p).second)
      throw_data("duplicate parameter name: " + p->name);
    items_.push_back(p);
  }

  const std::vector<Param<T>*>& items() const { return items_; }

  Param<T>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  void zero_grads() {
    for (auto* p : items_) p->g.zero();
  }

  double grad_norm() const {
    double acc = 0.0;
    for (const auto* p : items_)
      for (T x : p->g.v) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
  }

  void scale_grads(double s) {
    for (auto* p : items_)
      for (T& x : p->g.v) x = static_cast<T>(x * s);
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto* p : items_) n += p->w.size();
    return n;
  }

 private:
  std::vector<Param<T>*> items_;
  std::map<std::string, Param<T>*> by_name_;
};

// ---------------------------------------------------------------------------
// Embedding

template <class T>
struct Embedding {
  Param<T> table;

  void init(ParamStore<T>& ps, const std::string& name, int vocab, int dim,
            Rng& rng, double stddev) {
    table.name = name;
    table.w.resize(vocab, dim);
    table.g.resize(vocab, dim);
    init_normal(table.w, rng, stddev);
    ps.add(&table);
  }

  void forward(const std::vector<int>& ids, Tensor2<T>& out) const {
    out.resize(static_cast<int>(ids.size()), table.w.cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= table.w.rows)
        throw_data("embedding index out of range: " + std::to_string(ids[i]));
      std::memcpy(out.row(static_cast<int>(i)), table.w.row(ids[i]),
                  sizeof(T) * table.w.cols);
    }
  }

  void backward(const std::vector<int>& ids, const Tensor2<T>& dout) {
    for (std::size_t i = 0; i < ids.size(); ++i) {
      T* g = table.g.row(ids[i]);
      const T* d = dout.row(static_cast<int>(i));
      for (int c = 0; c < table.w.cols; ++c) g[c] += d[c];
    }
  }

  // Convenience for summed lookups (acoustic base): out += table[ids]
  void forward_add(const std::vector<int>& ids, Tensor2<T>& out) const {
    if (out.rows != static_cast<int>(ids.size()) || out.cols != table.w.cols)
      throw_data("embedding forward_add: shape mismatch");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= table.w.rows)
        throw_data("embedding index out of range: " + std::to_string(ids[i]));
      T* o = out.row(static_cast<int>(i));
      const T* w = table.w.row(ids[i]);
      for (int c = 0; c < table.w.cols; ++c) o[c] += w[c];
    }
  }
};

// ---------------------------------------------------------------------------
// Linear

template <class T>
struct Linear {
  Param<T> w;  // in x out
  Param<T> b;  // 1 x out
  bool has_bias = true;

  struct Cache {
    Tensor2<T> x;
  };

  void init(ParamStore<T>& ps, const std::string& name, int in, int out,
            Rng& rng, double stddev, bool bias = true) {
    has_bias = bias;
    w.name = name + ".w";
    w.w.resize(in, out);
    w.g.resize(in, out);
    init_normal(w.w, rng, stddev);
    ps.add(&w);
    if (has_bias) {
      b.name = name + ".b";
      b.w.resize(1, out);
      b.g.resize(1, out);
      ps.add(&b);
    }
  }

  void forward(const Tensor2<T>& x, Tensor2<T>& y, Cache* c) const {
    matmul(x, w.w, y);
    if (has_bias) add_row_broadcast(y, b.w.v);
    if (c) c->x = x;
  }

  void backward(const Cache& c, const Tensor2<T>& dy, Tensor2<T>* dx) {
    matmul_tn_acc(c.x, dy, w.g);
    if (has_bias) {
      for (int r = 0; r < dy.rows; ++r) {
        const T* dr = dy.row(r);
        for (int col = 0; col < dy.cols; ++col) b.g.v[col] += dr[col];
      }
    }
    if (dx) matmul_nt(dy, w.w, *dx);
  }
};

// ---------------------------------------------------------------------------
// (Adaptive) layer norm. With d_cond == 0 this is a plain layer norm with
// directly learned gamma/beta. With a condition vector, gamma and beta are
// affine maps of the condition: gamma = cond*Wg + bg, beta = cond*Wb + bb.
// bg starts at 1 and the maps at 0, so training starts from a plain norm.

template <class T>
struct AdaNorm {
  static constexpr double kEps = 1e-5;
  int dim = 0;
  int d_cond = 0;
  Param<T> wg, bg, wb, bb;

  struct Cache {
    Tensor2<T> xhat;
    std::vector<T> inv_std;
    std::vector<T> gamma, beta;
    std::vector<T> cond;
  };

  void init(ParamStore<T>& ps, const std::string& name, int d, int dc) {
    dim = d;
    d_cond = dc;
    bg.name = name + ".g_bias";
    bg.w.resize(1, d);
    bg.g.resize(1, d);
    bg.w.fill(T(1));
    ps.add(&bg);
    bb.name = name + ".b_bias";
    bb.w.resize(1, d);
    bb.g.resize(1, d);
    ps.add(&bb);
    if (d_cond > 0) {
      wg.name = name + ".g_map";
      wg.w.resize(dc, d);
      wg.g.resize(dc, d);
      ps.add(&wg);
      wb.name = name + ".b_map";
      wb.w.resize(dc, d);
      wb.g.resize(dc, d);
      ps.add(&wb);
    }
  }

  void forward(const Tensor2<T>& x, const std::vector<T>& cond, Tensor2<T>& y,
               Cache& c) const {
    if (x.cols != dim) throw_data("adanorm: feature dimension mismatch");
    if (d_cond > 0 && static_cast<int>(cond.size()) != d_cond)
      throw_data("adanorm: condition length mismatch");
    c.gamma.assign(bg.w.v.begin(), bg.w.v.end());
    c.beta.assign(bb.w.v.begin(), bb.w.v.end());
    if (d_cond > 0) {
      c.cond = cond;
      for (int i = 0; i < d_cond; ++i) {
        const T ci = cond[i];
        const T* wgr = wg.w.row(i);
        const T* wbr = wb.w.row(i);
        for (int j = 0; j < dim; ++j) {
          c.gamma[j] += ci * wgr[j];
          c.beta[j] += ci * wbr[j];
        }
      }
    }
    y.resize(x.rows, dim);
    c.xhat.resize(x.rows, dim);
    c.inv_std.assign(x.rows, T(0));
    for (int r = 0; r < x.rows; ++r) {
      const T* xr = x.row(r);
      double mu = 0.0;
      for (int j = 0; j < dim; ++j) mu += xr[j];
      mu /= dim;
      double var = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double d = xr[j] - mu;
        var += d * d;
      }
      var /= dim;
      const T istd = static_cast<T>(1.0 / std::sqrt(var + kEps));
      c.inv_std[r] = istd;
      T* xh = c.xhat.row(r);
      T* yr = y.row(r);
      for (int j = 0; j < dim; ++j) {
        xh[j] = static_cast<T>((xr[j] - mu) * istd);
        yr[j] = c.gamma[j] * xh[j] + c.beta[j];
      }
    }
  }

  void backward(const Cache& c, const Tensor2<T>& dy, Tensor2<T>& dx,
                std::vector<T>* dcond) {
    const int L = dy.rows;
    dx.resize(L, dim);
    std::vector<T> dgamma(dim, T(0)), dbeta(dim, T(0));
    for (int r = 0; r < L; ++r) {
      const T* dyr = dy.row(r);
      const T* xh = c.xhat.row(r);
      double sum_g = 0.0, sum_gx = 0.0;
      for (int j = 0; j < dim; ++j) {
        const double g = static_cast<double>(c.gamma[j]) * dyr[j];
        sum_g += g;
        sum_gx += g * xh[j];
        dgamma[j] += dyr[j] * xh[j];
        dbeta[j] += dyr[j];
      }
      const double mean_g = sum_g / dim;
      const double mean_gx = sum_gx / dim;
      T* dxr = dx.row(r);
      for (int j = 0; j < dim; ++j) {
        const double g = static_cast<double>(c.gamma[j]) * dyr[j];
        dxr[j] = static_cast<T>((g - mean_g - xh[j] * mean_gx) * c.inv_std[r]);
      }
    }
    for (int j = 0; j < dim; ++j) {
      bg.g.v[j] += dgamma[j];
      bb.g.v[j] += dbeta[j];
    }
    if (d_cond > 0) {
      for (int i = 0; i < d_cond; ++i) {
        const T ci = c.cond[i];
        T* wgg = wg.g.row(i);
        T* wbg = wb.g.row(i);
        const T* wgr = wg.w.row(i);
        const T* wbr = wb.w.row(i);
        T dci = T(0);
        for (int j = 0; j < dim; ++j) {
          wgg[j] += ci * dgamma[j];
          wbg[j] += ci * dbeta[j];
          dci += wgr[j] * dgamma[j] + wbr[j] * dbeta[j];
        }
        if (dcond) (*dcond)[i] += dci;
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Multi-head attention with learned projections on query, key, value and an
// output projection. Query and key/value sides may have different input
// widths (the style network attends from the acoustic base over the token
// bank). prefix_causal: rows < prefix attend within the prefix, rows >=
// prefix attend to everything up to and including themselves.

enum class AttnMask { none, prefix_causal };

template <class T>
struct MultiHeadAttention {
  int heads = 0;
  int d_attn = 0;
  int dh = 0;
  Linear<T> wq, wk, wv, wo;

  struct Cache {
    typename Linear<T>::Cache cq, ck, cv, co;
    Tensor2<T> q, k, v;
    std::vector<Tensor2<T>> att;  // per head, rows sum to 1
    Tensor2<T> ctx;
  };

  void init(ParamStore<T>& ps, const std::string& name, int d_q_in, int d_kv_in,
            int d_attention, int d_out, int n_heads, Rng& rng, double stddev) {
    if (d_attention % n_heads != 0)
      throw_data("attention dim must be divisible by head count");
    heads = n_heads;
    d_attn = d_attention;
    dh = d_attention / n_heads;
    wq.init(ps, name + ".wq", d_q_in, d_attention, rng, stddev);
    wk.init(ps, name + ".wk", d_kv_in, d_attention, rng, stddev);
    wv.init(ps, name + ".wv", d_kv_in, d_attention, rng, stddev);
    wo.init(ps, name + ".wo", d_attention, d_out, rng, stddev);
  }

  bool allowed(AttnMask mask, int prefix, int i, int j) const {
    if (mask == AttnMask::none) return true;
    return i < prefix ? j < prefix : j <= i;
  }

  void forward(const Tensor2<T>& qin, const Tensor2<T>& kin, const Tensor2<T>& vin,
               AttnMask mask, int prefix, Tensor2<T>& out, Cache& c) const {
    wq.forward(qin, c.q, &c.cq);
    wk.forward(kin, c.k, &c.ck);
    wv.forward(vin, c.v, &c.cv);
    const int L = c.q.rows, M = c.k.rows;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    c.att.assign(heads, Tensor2<T>());
    c.ctx.resize(L, d_attn);
    for (int h = 0; h < heads; ++h) {
      Tensor2<T>& att = c.att[h];
      att.resize(L, M);
      const int off = h * dh;
      parallel_for(static_cast<std::size_t>(L), [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
          const T* qi = c.q.row(static_cast<int>(i)) + off;
          T* ai = att.row(static_cast<int>(i));
          double mx = -1e300;
          for (int j = 0; j < M; ++j) {
            if (!allowed(mask, prefix, static_cast<int>(i), j)) {
              ai[j] = T(0);
              continue;
            }
            const T* kj = c.k.row(j) + off;
            double s = 0.0;
            for (int t = 0; t < dh; ++t) s += static_cast<double>(qi[t]) * kj[t];
            s *= scale;
            ai[j] = static_cast<T>(s);
            if (s > mx) mx = s;
          }
          double denom = 0.0;
          for (int j = 0; j < M; ++j) {
            if (!allowed(mask, prefix, static_cast<int>(i), j)) continue;
            const double e = std::exp(static_cast<double>(ai[j]) - mx);
            ai[j] = static_cast<T>(e);
            denom += e;
          }
          T* ctx = c.ctx.row(static_cast<int>(i)) + off;
          for (int t = 0; t < dh; ++t) ctx[t] = T(0);
          for (int j = 0; j < M; ++j) {
            if (!allowed(mask, prefix, static_cast<int>(i), j)) continue;
            const T a = static_cast<T>(ai[j] / denom);
            ai[j] = a;
            const T* vj = c.v.row(j) + off;
            for (int t = 0; t < dh; ++t) ctx[t] += a * vj[t];
          }
        }
      });
    }
    wo.forward(c.ctx, out, &c.co);
  }

  void backward(const Cache& c, const Tensor2<T>& dout, AttnMask mask, int prefix,
                Tensor2<T>& dqin, Tensor2<T>& dkin, Tensor2<T>& dvin) {
    Tensor2<T> dctx;
    wo.backward(c.co, dout, &dctx);
    const int L = c.q.rows, M = c.k.rows;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor2<T> dq(L, d_attn), dk(M, d_attn), dv(M, d_attn);
    for (int h = 0; h < heads; ++h) {
      const Tensor2<T>& att = c.att[h];
      const int off = h * dh;
      for (int i = 0; i < L; ++i) {
        const T* ai = att.row(i);
        const T* dci = dctx.row(i) + off;
        // dv and softmax backward
        double dot = 0.0;
        std::vector<double> datt(M, 0.0);
        for (int j = 0; j < M; ++j) {
          if (!allowed(mask, prefix, i, j)) continue;
          const T* vj = c.v.row(j) + off;
          T* dvj = dv.row(j) + off;
          double da = 0.0;
          for (int t = 0; t < dh; ++t) {
            da += static_cast<double>(dci[t]) * vj[t];
            dvj[t] += ai[j] * dci[t];
          }
          datt[j] = da;
          dot += da * ai[j];
        }
        const T* qi = c.q.row(i) + off;
        T* dqi = dq.row(i) + off;
        for (int j = 0; j < M; ++j) {
          if (!allowed(mask, prefix, i, j)) continue;
          const double ds = (datt[j] - dot) * ai[j] * scale;
          const T* kj = c.k.row(j) + off;
          T* dkj = dk.row(j) + off;
          for (int t = 0; t < dh; ++t) {
            dqi[t] += static_cast<T>(ds) * kj[t];
            dkj[t] += static_cast<T>(ds) * qi[t];
          }
        }
      }
    }
    wq.backward(c.cq, dq, &dqin);
    wk.backward(c.ck, dk, &dkin);
    wv.backward(c.cv, dv, &dvin);
  }
};

// ---------------------------------------------------------------------------
// Feed-forward with the tanh-form GELU: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715 x^3)))

template <class T>
inline T gelu(T x) {
  const double xd = static_cast<double>(x);
  const double u = 0.7978845608028654 * (xd + 0.044715 * xd * xd * xd);
  return static_cast<T>(0.5 * xd * (1.0 + std::tanh(u)));
}

template <class T>
inline T gelu_grad(T x) {
  const double xd = static_cast<double>(x);
  const double u = 0.7978845608028654 * (xd + 0.044715 * xd * xd * xd);
  const double t = std::tanh(u);
  const double du = 0.7978845608028654 * (1.0 + 3.0 * 0.044715 * xd * xd);
  return static_cast<T>(0.5 * (1.0 + t) + 0.5 * xd * (1.0 - t * t) * du);
}

template <class T>
struct FeedForward {
  Linear<T> fc1, fc2;

  struct Cache {
    typename Linear<T>::Cache c1, c2;
    Tensor2<T> pre;  // fc1 output before the nonlinearity
  };

  void init(ParamStore<T>& ps, const std::string& name, int d, int hidden,
            Rng& rng, double stddev) {
    fc1.init(ps, name + ".fc1", d, hidden, rng, stddev);
    fc2.init(ps, name + ".fc2", hidden, d, rng, stddev);
  }

  void forward(const Tensor2<T>& x, Tensor2<T>& y, Cache& c) const {
    fc1.forward(x, c.pre, &c.c1);
    Tensor2<T> act(c.pre.rows, c.pre.cols);
    for (std::size_t i = 0; i < c.pre.v.size(); ++i) act.v[i] = gelu(c.pre.v[i]);
    fc2.forward(act, y, &c.c2);
  }

  void backward(const Cache& c, const Tensor2<T>& dy, Tensor2<T>& dx) {
    Tensor2<T> dact;
    fc2.backward(c.c2, dy, &dact);
    for (std::size_t i = 0; i < dact.v.size(); ++i)
      dact.v[i] *= gelu_grad(c.pre.v[i]);
    fc1.backward(c.c1, dact, &dx);
  }
};

// ---------------------------------------------------------------------------
// Sinusoidal positions: pos[t][2i] = sin(t / 10000^(2i/D)), pos[t][2i+1] = cos(...)

template <class T>
Tensor2<T> sinusoidal_positions(int length, int dim) {
  if (dim % 2 != 0) throw_data("sinusoidal positions require an even dimension");
  Tensor2<T> pos(length, dim);
  for (int t = 0; t < length; ++t) {
    T* r = pos.row(t);
    for (int i = 0; i < dim / 2; ++i) {
      const double freq = std::pow(10000.0, -2.0 * i / dim);
      r[2 * i] = static_cast<T>(std::sin(t * freq));
      r[2 * i + 1] = static_cast<T>(std::cos(t * freq));
    }
  }
  return pos;
}

// ---------------------------------------------------------------------------
// Temperature sampling. tau -> 0+ approaches argmax. +inf logits are taken
// literally: the lowest +inf index wins.

template <class T>
int softmax_sample(const std::vector<T>& logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw_data("sampling temperature must be positive");
  if (logits.empty()) throw_data("softmax_sample: empty logits");
  double mx = -1e300;
  for (T x : logits) {
    const double xd = static_cast<double>(x);
    if (std::isinf(xd) && xd > 0) {
      for (std::size_t i = 0; i < logits.size(); ++i)
        if (std::isinf(static_cast<double>(logits[i])) &&
            static_cast<double>(logits[i]) > 0)
          return static_cast<int>(i);
    }
    if (xd > mx) mx = xd;
  }
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((static_cast<double>(logits[i]) - mx) / tau);
    total += p[i];
  }
  const double r = rng.next_double() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    acc += p[i];
    if (acc >= r) return static_cast<int>(i);
  }
  return static_cast<int>(logits.size()) - 1;
}

// ---------------------------------------------------------------------------
// Softmax cross entropy over rows: returns the mean loss and writes
// d(mean loss)/d(logits).

template <class T>
double softmax_xent_mean(const Tensor2<T>& logits, const std::vector<int>& labels,
                         Tensor2<T>& dlogits) {
  if (static_cast<int>(labels.size()) != logits.rows)
    throw_data("cross entropy: label count mismatch");
  dlogits.resize(logits.rows, logits.cols);
  const double inv_n = 1.0 / logits.rows;
  double loss = 0.0;
  for (int r = 0; r < logits.rows; ++r) {
    const T* lr = logits.row(r);
    T* dr = dlogits.row(r);
    double mx = -1e300;
    for (int c = 0; c < logits.cols; ++c)
      mx = std::max(mx, static_cast<double>(lr[c]));
    double denom = 0.0;
    for (int c = 0; c < logits.cols; ++c)
      denom += std::exp(static_cast<double>(lr[c]) - mx);
    const int y = labels[r];
    if (y < 0 || y >= logits.cols) throw_data("cross entropy: label out of range");
    loss -= (static_cast<double>(lr[y]) - mx - std::log(denom)) * inv_n;
    for (int c = 0; c < logits.cols; ++c) {
      const double p = std::exp(static_cast<double>(lr[c]) - mx) / denom;
      dr[c] = static_cast<T>((p - (c == y ? 1.0 : 0.0)) * inv_n);
    }
  }
  if (!std::isfinite(loss)) throw_numeric("non-finite loss");
  return loss;
}

template <class T>
int argmax_row(const Tensor2<T>& m, int r) {
  int best = 0;
  for (int c = 1; c < m.cols; ++c)
    if (m.at(r, c) > m.at(r, best)) best = c;
  return best;
}

// ---------------------------------------------------------------------------
// Adam with decoupled weight decay. The moment buffers line up with the
// store's registration order.

template <class T>
struct Adam {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int64_t t = 0;
  std::vector<Tensor2<T>> m, v;

  void init(const ParamStore<T>& store) {
    m.clear();
    v.clear();
    for (const auto* p : store.items()) {
      m.emplace_back(p->w.rows, p->w.cols);
      v.emplace_back(p->w.rows, p->w.cols);
    }
    t = 0;
  }

  void step(ParamStore<T>& store, double lr, double weight_decay) {
    if (m.size() != store.items().size()) throw_data("Adam state not initialized");
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < store.items().size(); ++i) {
      Param<T>* p = store.items()[i];
      T* mw = m[i].v.data();
      T* vw = v[i].v.data();
      T* w = p->w.v.data();
      const T* g = p->g.v.data();
      const std::size_t n = p->w.size();
      for (std::size_t j = 0; j < n; ++j) {
        const double gj = static_cast<double>(g[j]);
        const double mj = beta1 * mw[j] + (1.0 - beta1) * gj;
        const double vj = beta2 * vw[j] + (1.0 - beta2) * gj * gj;
        mw[j] = static_cast<T>(mj);
        vw[j] = static_cast<T>(vj);
        const double update = (mj / bc1) / (std::sqrt(vj / bc2) + eps);
        w[j] = static_cast<T>(w[j] - lr * update - lr * weight_decay * w[j]);
      }
    }
  }
};

}  // namespace scve
