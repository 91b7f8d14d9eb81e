#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "scve/model.hpp"
#include "scve/nn.hpp"

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

TEST_SUITE("ar_model") {
  TEST_CASE("teacher-forced logits at target 0 ignore later targets") {
    ARModel<float> ar(tiny_config(), 5);
    const std::vector<int> text{70, 89};
    const std::vector<int> prompt{1, 2};
    std::vector<int> target{3, 4, 5, 0};
    Tensor2<float> logits1, logits2;
    ARModel<float>::Cache c;
    ar.forward(text, prompt, target, logits1, c);
    target[1] = 0;
    target[3] = 2;
    ar.forward(text, prompt, target, logits2, c);
    for (int j = 0; j < logits1.cols; ++j)
      CHECK(logits1.at(0, j) == logits2.at(0, j));
    // and the row for target 1 (depends on target 0 only) is also unchanged
    for (int j = 0; j < logits1.cols; ++j)
      CHECK(logits1.at(1, j) == logits2.at(1, j));
  }

  TEST_CASE("init loss is close to ln(K+1)") {
    ARModel<float> ar(tiny_config(), 77);
    const std::vector<int> text{70, 89, 3, 8};
    const std::vector<int> target{0, 1, 2, 3, 4, 5, 0, 1, 2, 3};
    const double loss = ar.loss_and_grad(text, {}, target);
    const double expect = std::log(7.0);
    CHECK(std::fabs(loss - expect) / expect < 0.05);
  }

  TEST_CASE("gradient check on a 2-position toy instance") {
    ModelConfig cfg = tiny_config();
    cfg.d_ff = 8;
    ARModel<double> ar(cfg, 9);
    const std::vector<int> text{70};
    const std::vector<int> prompt{2};
    const std::vector<int> target{4, 1};
    auto loss = [&] {
      ARModel<double>::Cache c;
      Tensor2<double> logits;
      ar.forward(text, prompt, target, logits, c);
      std::vector<int> labels(target);
      labels.push_back(ar.eos_class());
      Tensor2<double> dlogits;
      return softmax_xent_mean(logits, labels, dlogits);
    };
    ar.store.zero_grads();
    loss();  // warm call, then the real one accumulating grads
    {
      ARModel<double>::Cache c;
      Tensor2<double> logits;
      ar.forward(text, prompt, target, logits, c);
      std::vector<int> labels(target);
      labels.push_back(ar.eos_class());
      Tensor2<double> dlogits;
      softmax_xent_mean(logits, labels, dlogits);
      ar.backward(c, dlogits);
    }
    for (auto* p : ar.store.items())
      CHECK_MESSAGE(max_grad_err(p->w, p->g, loss) < 1e-4, p->name);
  }

  TEST_CASE("overfits a single repeated token within 500 steps") {
    ModelConfig cfg = tiny_config();
    ARModel<float> ar(cfg, 15);
    Adam<float> adam;
    adam.init(ar.store);
    const std::vector<int> text{70, 89};
    const std::vector<int> target(8, 3);
    double loss = 1e9;
    for (int step = 0; step < 500 && loss >= 0.01; ++step) {
      ar.store.zero_grads();
      loss = ar.loss_and_grad(text, {}, target);
      adam.step(ar.store, 1e-2, 0.0);
    }
    CHECK(loss < 0.01);
  }

  TEST_CASE("generation is deterministic under a fixed seed") {
    ARModel<float> ar(tiny_config(), 21);
    const std::vector<int> text{70, 89, 110};
    const std::vector<int> prompt{0, 1, 2};
    Rng rng1(derive_seed(9, "sample"));
    Rng rng2(derive_seed(9, "sample"));
    const auto a = ar.generate(text, prompt, 0.7, rng1, 24);
    const auto b = ar.generate(text, prompt, 0.7, rng2, 24);
    CHECK(a.codes == b.codes);
    CHECK(a.truncated == b.truncated);
  }

  TEST_CASE("an EOS-biased model returns an empty, non-truncated sequence") {
    ARModel<float> ar(tiny_config(), 33);
    ar.classifier.b.w.at(0, ar.eos_class()) = 50.0f;
    Rng rng(1);
    const auto out = ar.generate({70, 89}, {1}, 0.2, rng, 16);
    CHECK(out.codes.empty());
    CHECK_FALSE(out.truncated);
  }

  TEST_CASE("a never-EOS model hits max_len and reports truncation") {
    ARModel<float> ar(tiny_config(), 34);
    ar.classifier.b.w.at(0, ar.eos_class()) = -50.0f;
    Rng rng(2);
    const auto out = ar.generate({70, 89}, {1}, 0.2, rng, 5);
    CHECK(out.codes.size() == 5);
    CHECK(out.truncated);
  }

  TEST_CASE("cached generation matches the batch forward path") {
    ARModel<float> ar(tiny_config(), 44);
    ar.classifier.b.w.at(0, ar.eos_class()) = -50.0f;  // force a long rollout
    const std::vector<int> text{70, 89, 3};
    const std::vector<int> prompt{2, 4};
    Rng rng(derive_seed(5, "x"));
    const auto gen = ar.generate(text, prompt, 0.4, rng, 10);
    REQUIRE(gen.codes.size() == 10);
    // teacher-force the generated codes; greedy continuation must agree where
    // sampling picked the argmax
    Tensor2<float> logits;
    ARModel<float>::Cache c;
    ar.forward(text, prompt, gen.codes, logits, c);
    // re-run generation reading from batch logits row by row
    Rng rng2(derive_seed(5, "x"));
    std::vector<int> replay;
    for (std::size_t t = 0; t < gen.codes.size(); ++t) {
      std::vector<float> row(logits.row(static_cast<int>(t)),
                             logits.row(static_cast<int>(t)) + logits.cols);
      replay.push_back(softmax_sample(row, 0.4, rng2));
    }
    CHECK(replay == gen.codes);
  }
}

TEST_SUITE("nar_model") {
  TEST_CASE("non-causal: last-frame change reaches frame-0 logits") {
    NARModel<float> nar(tiny_config(), 3);
    const std::vector<int> text{70, 89};
    auto grid = random_grid(6, 6, 8);
    Tensor2<float> logits1, logits2;
    NARModel<float>::Cache c;
    nar.forward(text, grid, 2, ones_control(4), false, logits1, c);
    grid.codes[0][5] = (grid.codes[0][5] + 1) % 6;
    nar.forward(text, grid, 2, ones_control(4), false, logits2, c);
    bool changed = false;
    for (int j = 0; j < logits1.cols; ++j)
      if (logits1.at(0, j) != logits2.at(0, j)) changed = true;
    CHECK(changed);
  }

  TEST_CASE("stage-d logits ignore codes at stages >= d") {
    NARModel<float> nar(tiny_config(), 3);
    const std::vector<int> text{70, 89};
    auto grid = random_grid(6, 6, 12);
    const int d = 4;
    Tensor2<float> logits1, logits2;
    NARModel<float>::Cache c;
    nar.forward(text, grid, d, ones_control(4), false, logits1, c);
    for (int t = 0; t < 6; ++t) {
      grid.codes[d][t] = (grid.codes[d][t] + 3) % 6;      // stage d+1
      grid.codes[d - 1][t] = (grid.codes[d - 1][t] + 3) % 6;  // stage d labels
    }
    nar.forward(text, grid, d, ones_control(4), false, logits2, c);
    CHECK(logits1.v == logits2.v);
  }

  TEST_CASE("all-ones control equals bypassed scaling bitwise") {
    NARModel<float> nar(tiny_config(), 3);
    const std::vector<int> text{70, 89, 110};
    const auto grid = random_grid(9, 6, 14);
    for (int d = 2; d <= kRvqStages; ++d) {
      Tensor2<float> a, b;
      NARModel<float>::Cache c;
      nar.forward(text, grid, d, ones_control(4), false, a, c);
      nar.forward(text, grid, d, ones_control(4), true, b, c);
      CHECK(a.v == b.v);
    }
  }

  TEST_CASE("init loss is close to ln(K)") {
    NARModel<float> nar(tiny_config(), 99);
    const std::vector<int> text{70, 89, 3};
    const auto grid = random_grid(12, 6, 31);
    const double loss =
        nar.loss_and_grad(text, grid, 3, ones_control(4));
    const double expect = std::log(6.0);
    CHECK(std::fabs(loss - expect) / expect < 0.05);
  }

  TEST_CASE("training rejects any control vector that is not all-ones") {
    NARModel<float> nar(tiny_config(), 3);
    const auto grid = random_grid(5, 6, 3);
    std::vector<double> c = ones_control(4);
    c[1] = 1.5;
    CHECK_THROWS_AS(nar.loss_and_grad({70, 89}, grid, 2, c), Error);
  }

  TEST_CASE("full-model gradient check on a tiny instance") {
    ModelConfig cfg = tiny_config();
    cfg.d_ff = 8;
    NARModel<double> nar(cfg, 51);
    const std::vector<int> text{70, 89};
    const auto grid = random_grid(3, cfg.codebook_size, 77);
    const int d = 3;
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
    for (auto* p : nar.store.items()) {
      // stages >= d and their optimizer-visible tables get zero gradients;
      // finite differences agree (loss does not depend on them)
      CHECK_MESSAGE(max_grad_err(p->w, p->g, loss) < 1e-4, p->name);
    }
  }

  TEST_CASE("overfit smoke: one utterance reaches 100% on every stage") {
    ModelConfig cfg = tiny_config();
    cfg.d_model = 16;
    cfg.d_ff = 32;
    cfg.d_style = 8;
    NARModel<float> nar(cfg, 4);
    Adam<float> adam;
    adam.init(nar.store);
    const std::vector<int> text{70, 89, 110, 72, 91};
    const auto grid = random_grid(10, cfg.codebook_size, 5);
    const auto ones = ones_control(cfg.style_tokens);
    Rng stage_rng(11);
    bool perfect = false;
    for (int step = 0; step < 2000 && !perfect; ++step) {
      nar.store.zero_grads();
      const int d = 2 + static_cast<int>(stage_rng.next_below(7));
      nar.loss_and_grad(text, grid, d, ones);
      adam.step(nar.store, 5e-3, 0.0);
      if (step % 50 == 49) {
        perfect = true;
        for (int dd = 2; dd <= kRvqStages && perfect; ++dd) {
          std::size_t ok = 0, total = 0;
          nar.accuracy(text, grid, dd, ok, total);
          perfect = ok == total;
        }
      }
    }
    CHECK(perfect);
  }
}
