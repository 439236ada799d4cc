#include <doctest.h>

#include <cmath>
#include <vector>

#include "scfusion/errors.hpp"
#include "scfusion/head.hpp"
#include "scfusion/losses.hpp"
#include "scfusion/rng.hpp"
#include "scfusion/train.hpp"

using namespace scf;

namespace {

// Sparse-ish tensor: a few nonzero cells on an otherwise zero grid, the
// shape splatted BEV features actually have.
Tensor3f sprinkle(std::mt19937_64& g, int c, int h, int w, int nonzero_cells) {
  Tensor3f t = Tensor3f::zeros(c, h, w);
  for (int k = 0; k < nonzero_cells; ++k) {
    const int y = static_cast<int>(rng::uniform01(g) * h);
    const int x = static_cast<int>(rng::uniform01(g) * w);
    for (int ch = 0; ch < c; ++ch)
      t.at(ch, std::min(y, h - 1), std::min(x, w - 1)) =
          static_cast<float>(rng::uniform(g, -1.0, 1.0));
  }
  return t;
}

}  // namespace

TEST_CASE("sparse forward equals the dense head everywhere") {
  for (uint64_t seed : {1ULL, 4ULL, 9ULL}) {
    auto g = rng::substream(seed, {rng::fnv1a64("train-sparse")});
    const int c = 3, h = 14, w = 11;
    const Tensor3f f_t = sprinkle(g, c, h, w, 6);
    const Tensor3f f_prev = sprinkle(g, c, h, w, 4);
    const head::HeadParams p = head::HeadParams::seeded(2 * c, 5, seed);

    const head::ProbMap sparse =
        train::sparse_forward(p, train::full_view(f_t), train::full_view(f_prev), h, w);
    const head::ProbMap dense = head::head_forward(p, f_t, f_prev);
    REQUIRE(sparse.p.size() == dense.p.size());
    for (size_t i = 0; i < sparse.p.size(); ++i) CHECK(sparse.p[i] == dense.p[i]);
  }
}

TEST_CASE("background logit matches the dense head on all-zero input") {
  const head::HeadParams p = head::HeadParams::seeded(6, 4, 3);
  const Tensor3f zero = Tensor3f::zeros(3, 9, 9);
  const std::vector<double> logits = head::head_logits(p, zero, zero);
  const double bg = train::background_logit(p);
  for (double l : logits) CHECK(l == doctest::Approx(bg).epsilon(1e-15));
}

TEST_CASE("active bitmap covers exactly the receptive fields of nonzero cells") {
  auto g = rng::substream(12, {rng::fnv1a64("train-active")});
  const int c = 2, h = 16, w = 16;
  const Tensor3f f_t = sprinkle(g, c, h, w, 3);
  const Tensor3f f_prev = Tensor3f::zeros(c, h, w);
  const head::HeadParams p = head::HeadParams::seeded(2 * c, 4, 8);

  const std::vector<uint8_t> active =
      train::active_bitmap(train::full_view(f_t), train::full_view(f_prev), h, w);
  const head::ProbMap dense = head::head_forward(p, f_t, f_prev);
  const double bg_p = head::sigmoid(train::background_logit(p));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (!active[static_cast<size_t>(y) * w + x])
        CHECK(dense.at(y, x) == doctest::Approx(bg_p).epsilon(1e-15));

  const std::vector<int> cells =
      train::nonzero_cells(train::full_view(f_t), train::full_view(f_prev), h, w);
  for (int ci : cells) CHECK(active[static_cast<size_t>(ci)] == 1);
  // Ascending and unique.
  for (size_t i = 1; i < cells.size(); ++i) CHECK(cells[i] > cells[i - 1]);
}

TEST_CASE("channel-slice views mean zero outside their slice") {
  auto g = rng::substream(13, {rng::fnv1a64("train-slice")});
  const int h = 10, w = 10;
  const Tensor3f part = sprinkle(g, 2, h, w, 5);  // occupies channels 2..3 of 4
  Tensor3f dense_equiv = Tensor3f::zeros(4, h, w);
  for (int ch = 0; ch < 2; ++ch)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) dense_equiv.at(ch + 2, y, x) = part.at(ch, y, x);

  const head::HeadParams p = head::HeadParams::seeded(8, 4, 21);
  const Tensor3f zero4 = Tensor3f::zeros(4, h, w);
  const train::InputView sliced{&part, 4, 2};
  const head::ProbMap sparse = train::sparse_forward(p, sliced, train::InputView{nullptr, 4, 0}, h, w);
  const head::ProbMap dense = head::head_forward(p, dense_equiv, zero4);
  for (size_t i = 0; i < sparse.p.size(); ++i) CHECK(sparse.p[i] == dense.p[i]);
}

TEST_CASE("focal step loss and gradients agree with the dense chain") {
  for (uint64_t seed : {2ULL, 7ULL}) {
    auto g = rng::substream(seed, {rng::fnv1a64("train-step")});
    const int c = 2, h = 12, w = 10;
    const Tensor3f f_t = sprinkle(g, c, h, w, 5);
    const Tensor3f f_prev = sprinkle(g, c, h, w, 3);
    const head::HeadParams p = head::HeadParams::seeded(2 * c, 4, seed + 100);

    head::GtHeatmap gt = head::GtHeatmap::zeros(h, w);
    Mask valid = Mask::zeros(h, w);
    for (size_t i = 0; i < gt.y.size(); ++i) {
      gt.y[i] = rng::uniform01(g) < 0.1 ? 1 : 0;
      valid.v[i] = rng::uniform01(g) < 0.85 ? 1 : 0;
    }
    losses::LossConfig cfg;
    cfg.centernet_variant = seed % 2 == 0;

    const train::SparseLoss got = train::head_focal_step(p, train::full_view(f_t),
                                                         train::full_view(f_prev), h, w, gt,
                                                         &valid, cfg);

    // Dense reference: forward, focal gradient in p, chain through the
    // sigmoid, then the dense backward pass.
    const std::vector<double> logits = head::head_logits(p, f_t, f_prev);
    head::ProbMap probs = head::ProbMap::zeros(h, w);
    for (size_t i = 0; i < logits.size(); ++i) probs.p[i] = head::sigmoid(logits[i]);
    const losses::FocalResult focal = losses::focal_loss_map(probs, gt, cfg, &valid);
    std::vector<double> d_logit(logits.size());
    for (size_t i = 0; i < logits.size(); ++i)
      d_logit[i] = focal.d_p[i] * probs.p[i] * (1.0 - probs.p[i]);
    const head::HeadBackwardResult back = head::head_backward(p, f_t, f_prev, d_logit);

    CHECK(got.loss == doctest::Approx(focal.loss).epsilon(1e-9));
    for (size_t i = 0; i < back.param_grads.w1.size(); ++i)
      CHECK(got.grads.w1[i] == doctest::Approx(back.param_grads.w1[i]).epsilon(1e-9));
    for (size_t i = 0; i < back.param_grads.b1.size(); ++i)
      CHECK(got.grads.b1[i] == doctest::Approx(back.param_grads.b1[i]).epsilon(1e-9));
    for (size_t i = 0; i < back.param_grads.w2.size(); ++i)
      CHECK(got.grads.w2[i] == doctest::Approx(back.param_grads.w2[i]).epsilon(1e-9));
    CHECK(got.grads.b2 == doctest::Approx(back.param_grads.b2).epsilon(1e-9));
  }
}

TEST_CASE("a precomputed active bitmap changes nothing") {
  auto g = rng::substream(14, {rng::fnv1a64("train-precomputed")});
  const int c = 2, h = 10, w = 10;
  const Tensor3f f_t = sprinkle(g, c, h, w, 4);
  const Tensor3f f_prev = sprinkle(g, c, h, w, 2);
  const head::HeadParams p = head::HeadParams::seeded(2 * c, 3, 5);
  head::GtHeatmap gt = head::GtHeatmap::zeros(h, w);
  gt.at(4, 4) = 1;
  const losses::LossConfig cfg{};

  const auto a = train::head_focal_step(p, train::full_view(f_t), train::full_view(f_prev), h, w,
                                        gt, nullptr, cfg);
  const std::vector<uint8_t> bitmap =
      train::active_bitmap(train::full_view(f_t), train::full_view(f_prev), h, w);
  const auto b = train::head_focal_step(p, train::full_view(f_t), train::full_view(f_prev), h, w,
                                        gt, nullptr, cfg, &bitmap);
  CHECK(a.loss == b.loss);
  CHECK(a.grads.w1 == b.grads.w1);
  CHECK(a.grads.b2 == b.grads.b2);
}

TEST_CASE("axpy accumulates scaled gradients") {
  head::HeadParams acc = head::HeadParams::zeros(4, 2);
  head::HeadParams g = head::HeadParams::zeros(4, 2);
  for (size_t i = 0; i < g.w1.size(); ++i) g.w1[i] = static_cast<double>(i);
  g.b1 = {1.0, -1.0};
  g.w2 = {0.5, 2.0};
  g.b2 = 3.0;
  train::axpy(0.5, g, &acc);
  train::axpy(-0.25, g, &acc);
  for (size_t i = 0; i < g.w1.size(); ++i)
    CHECK(acc.w1[i] == doctest::Approx(0.25 * static_cast<double>(i)).epsilon(1e-15));
  CHECK(acc.b2 == doctest::Approx(0.75).epsilon(1e-15));
  head::HeadParams wrong = head::HeadParams::zeros(6, 2);
  CHECK_THROWS_AS(train::axpy(1.0, wrong, &acc), ValidationError);
}
