#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "scve/model.hpp"

using namespace scve;
using namespace scve::testing;

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.codebook_size = 6;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.ar_blocks = 1;
  cfg.nar_blocks = 1;
  cfg.d_ff = 16;
  cfg.style_tokens = 4;
  cfg.d_style = 8;
  cfg.style_heads = 2;
  return cfg;
}

QuantizedTokenGrid random_grid(int frames, int K, uint64_t seed) {
  QuantizedTokenGrid grid;
  grid.num_frames = frames;
  grid.codebook_size = K;
  Rng rng(seed);
  for (auto& row : grid.codes) {
    row.resize(frames);
    for (auto& c : row) c = static_cast<int>(rng.next_below(K));
  }
  return grid;
}

}  // namespace

TEST_SUITE("scale_tokens") {
  TEST_CASE("all-ones control returns S bitwise") {
    NARModel<float> nar(tiny_config(), 7);
    const auto k = nar.scale_tokens(ones_control(4));
    CHECK(k.v == nar.style_bank.w.v);
  }

  TEST_CASE("c = [0.5, 1, ...] exactly halves row 0") {
    NARModel<float> nar(tiny_config(), 7);
    auto c = ones_control(4);
    c[0] = 0.5;
    const auto k = nar.scale_tokens(c);
    for (int j = 0; j < 8; ++j) {
      CHECK(k.at(0, j) == 0.5f * nar.style_bank.w.at(0, j));
      CHECK(k.at(1, j) == nar.style_bank.w.at(1, j));
    }
  }

  TEST_CASE("c = [2.5, 1, ...] scales row 0 by 2.5") {
    NARModel<float> nar(tiny_config(), 7);
    auto c = ones_control(4);
    c[0] = 2.5;
    const auto k = nar.scale_tokens(c);
    for (int j = 0; j < 8; ++j)
      CHECK(k.at(0, j) == 2.5f * nar.style_bank.w.at(0, j));
  }

  TEST_CASE("out-of-range components are rejected with the index") {
    NARModel<float> nar(tiny_config(), 7);
    auto c = ones_control(4);
    c[2] = 2.6;
    try {
      nar.scale_tokens(c);
      FAIL("expected ControlOutOfRange");
    } catch (const ControlOutOfRange& e) {
      CHECK(e.index == 2);
      CHECK(e.value == 2.6);
    }
    c[2] = 0.4;
    CHECK_THROWS_AS(nar.scale_tokens(c), ControlOutOfRange);
    c[2] = 1.0;
    c.push_back(1.0);
    CHECK_THROWS_AS(nar.scale_tokens(c), Error);  // length mismatch
  }

  TEST_CASE("row-wise linearity: scale_tokens(alpha * c) = alpha (*) scale_tokens(c)") {
    NARModel<double> nar(tiny_config(), 11);
    std::vector<double> c{0.6, 1.2, 0.9, 2.0};
    const auto k1 = nar.scale_tokens(c);
    std::vector<double> c2 = c;
    c2[1] *= 2.0;  // stays within [0.5, 2.5]
    const auto k2 = nar.scale_tokens(c2);
    for (int j = 0; j < 8; ++j) {
      CHECK(k2.at(1, j) == doctest::Approx(2.0 * k1.at(1, j)).epsilon(1e-15));
      CHECK(k2.at(0, j) == k1.at(0, j));
    }
  }
}

TEST_SUITE("style_forward") {
  TEST_CASE("all-ones control is bit-identical to bypassing the scaling") {
    NARModel<float> nar(tiny_config(), 3);
    const auto grid = random_grid(10, 6, 21);
    for (int d = 2; d <= kRvqStages; ++d) {
      Tensor2<float> y_ones, y_bypass;
      NARModel<float>::StyleCache c1, c2;
      nar.style_forward(grid, d, ones_control(4), false, y_ones, c1);
      nar.style_forward(grid, d, ones_control(4), true, y_bypass, c2);
      CHECK(y_ones.v == y_bypass.v);
    }
  }

  TEST_CASE("Y has shape L x d_model for every stage") {
    NARModel<float> nar(tiny_config(), 3);
    const auto grid = random_grid(7, 6, 5);
    for (int d = 2; d <= kRvqStages; ++d) {
      Tensor2<float> y;
      NARModel<float>::StyleCache c;
      nar.style_forward(grid, d, ones_control(4), false, y, c);
      CHECK(y.rows == 7);
      CHECK(y.cols == 8);
      CHECK(y.all_finite());
    }
  }

  TEST_CASE("invalid stage is rejected") {
    NARModel<float> nar(tiny_config(), 3);
    const auto grid = random_grid(4, 6, 5);
    Tensor2<float> y;
    NARModel<float>::StyleCache c;
    CHECK_THROWS_AS(nar.style_forward(grid, 1, ones_control(4), false, y, c), Error);
    CHECK_THROWS_AS(nar.style_forward(grid, 9, ones_control(4), false, y, c), Error);
  }

  TEST_CASE("N = 1: attention weight is 1 and c has no effect") {
    ModelConfig cfg = tiny_config();
    cfg.style_tokens = 1;
    NARModel<float> nar(cfg, 13);
    const auto grid = random_grid(6, 6, 9);
    Tensor2<float> y_lo, y_hi;
    NARModel<float>::StyleCache c1, c2;
    nar.style_forward(grid, 3, {0.5}, false, y_lo, c1);
    nar.style_forward(grid, 3, {2.5}, false, y_hi, c2);
    CHECK(y_lo.v == y_hi.v);
    const auto w = nar.style_attention_weights(grid, 3, {1.7});
    for (int i = 0; i < w.rows; ++i) CHECK(w.at(i, 0) == doctest::Approx(1.0));
  }

  TEST_CASE("attention weight rows sum to 1 within 1e-12") {
    NARModel<double> nar(tiny_config(), 19);
    const auto grid = random_grid(12, 6, 2);
    std::vector<double> c{0.8, 1.9, 1.0, 2.2};
    const auto w = nar.style_attention_weights(grid, 5, c);
    for (int i = 0; i < w.rows; ++i) {
      double s = 0.0;
      for (int j = 0; j < w.cols; ++j) s += w.at(i, j);
      CHECK(std::fabs(s - 1.0) < 1e-12);
    }
  }

  TEST_CASE("all-ones weights equal bypass weights") {
    NARModel<double> nar(tiny_config(), 23);
    const auto grid = random_grid(9, 6, 4);
    Tensor2<double> y1, y2;
    NARModel<double>::StyleCache c1, c2;
    nar.style_forward(grid, 4, ones_control(4), false, y1, c1);
    nar.style_forward(grid, 4, ones_control(4), true, y2, c2);
    for (int h = 0; h < 2; ++h) CHECK(c1.att[h].v == c2.att[h].v);
  }

  TEST_CASE("pre-softmax scores are linear in each c_i") {
    NARModel<double> nar(tiny_config(), 29);
    const auto grid = random_grid(8, 6, 6);
    std::vector<double> c{1.0, 1.0, 1.0, 1.0};
    c[2] = 0.7;
    const auto base = nar.style_attention_scores(grid, 6, c);
    const double alpha = 2.0;  // 0.7 * 2 = 1.4, in range
    auto c2 = c;
    c2[2] *= alpha;
    const auto scaled = nar.style_attention_scores(grid, 6, c2);
    for (int i = 0; i < base.rows; ++i) {
      CHECK(rel_err(scaled.at(i, 2), alpha * base.at(i, 2)) < 1e-10);
      for (int j = 0; j < base.cols; ++j)
        if (j != 2) CHECK(scaled.at(i, j) == base.at(i, j));
    }
  }

  TEST_CASE("gradients through the style path match finite differences") {
    ModelConfig cfg = tiny_config();
    NARModel<double> nar(cfg, 31);
    const auto grid = random_grid(5, cfg.codebook_size, 44);
    const std::vector<int> text{70, 89, 3};
    const int d = 4;
    const auto ones = ones_control(cfg.style_tokens);
    auto loss = [&] {
      NARModel<double>::Cache cc;
      Tensor2<double> logits;
      nar.forward(text, grid, d, ones, false, logits, cc);
      Tensor2<double> dlogits;
      return softmax_xent_mean(logits, grid.codes[d - 1], dlogits);
    };
    nar.store.zero_grads();
    NARModel<double>::Cache cc;
    Tensor2<double> logits;
    nar.forward(text, grid, d, ones, false, logits, cc);
    Tensor2<double> dlogits;
    softmax_xent_mean(logits, grid.codes[d - 1], dlogits);
    nar.backward(cc, grid, dlogits);
    CHECK(max_grad_err(nar.style_bank.w, nar.style_bank.g, loss) < 1e-4);
    CHECK(max_grad_err(nar.style_q.w.w, nar.style_q.w.g, loss) < 1e-4);
    CHECK(max_grad_err(nar.style_out.w.w, nar.style_out.w.g, loss) < 1e-4);
    // prompt embeddings feeding the acoustic base
    for (int s = 0; s + 1 < d; ++s)
      CHECK(max_grad_err(nar.prompt_emb[s].table.w, nar.prompt_emb[s].table.g,
                         loss) < 1e-4);
  }
}
