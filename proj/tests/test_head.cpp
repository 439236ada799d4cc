#include <doctest.h>

#include <cmath>
#include <vector>

#include "scfusion/errors.hpp"
#include "scfusion/geometry.hpp"
#include "scfusion/head.hpp"
#include "scfusion/rng.hpp"

using namespace scf;

namespace {

Tensor3f random_tensor(std::mt19937_64& g, int c, int h, int w, double lo = -1.0, double hi = 1.0) {
  Tensor3f t = Tensor3f::zeros(c, h, w);
  for (float& v : t.v) v = static_cast<float>(rng::uniform(g, lo, hi));
  return t;
}

// Dense reference of the head: concat(f_t, f_prev), zero-padded dilated 5x5
// conv, ReLU, 1x1 projection. Written without the production loops.
std::vector<double> oracle_logits(const head::HeadParams& p, const Tensor3f& f_t,
                                  const Tensor3f& f_prev) {
  const int h = f_t.h, w = f_t.w, c = f_t.c;
  const auto input_at = [&](int i, int y, int x) -> double {
    if (y < 0 || y >= h || x < 0 || x >= w) return 0.0;
    return i < c ? f_t.at(i, y, x) : f_prev.at(i - c, y, x);
  };
  std::vector<double> logits(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double logit = p.b2;
      for (int o = 0; o < p.hidden; ++o) {
        double pre = p.b1[static_cast<size_t>(o)];
        for (int i = 0; i < p.in_c; ++i)
          for (int ky = 0; ky < head::kKernel; ++ky)
            for (int kx = 0; kx < head::kKernel; ++kx)
              pre += p.w1[p.w1_idx(o, i, ky, kx)] *
                     input_at(i, y + head::kDilation * (ky - head::kKernel / 2),
                              x + head::kDilation * (kx - head::kKernel / 2));
        logit += p.w2[static_cast<size_t>(o)] * (pre > 0.0 ? pre : 0.0);
      }
      logits[static_cast<size_t>(y) * w + x] = logit;
    }
  }
  return logits;
}

}  // namespace

TEST_CASE("forward pass matches the dense convolution oracle") {
  for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    auto g = rng::substream(seed, {rng::fnv1a64("head-forward")});
    const int c = 2, h = 9, w = 8;
    const Tensor3f f_t = random_tensor(g, c, h, w);
    const Tensor3f f_prev = random_tensor(g, c, h, w);
    const head::HeadParams p = head::HeadParams::seeded(2 * c, 4, seed);

    const std::vector<double> want = oracle_logits(p, f_t, f_prev);
    const std::vector<double> got = head::head_logits(p, f_t, f_prev);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));

    const head::ProbMap probs = head::head_forward(p, f_t, f_prev);
    for (size_t i = 0; i < got.size(); ++i) {
      CHECK(probs.p[i] == doctest::Approx(head::sigmoid(want[i])).epsilon(1e-12));
      CHECK(probs.p[i] > 0.0);
      CHECK(probs.p[i] < 1.0);
    }
  }
}

TEST_CASE("sigmoid clamp keeps extreme logits strictly inside (0,1)") {
  CHECK(head::sigmoid(1000.0) < 1.0);
  CHECK(head::sigmoid(-1000.0) > 0.0);
  CHECK(head::sigmoid(1000.0) == head::sigmoid(36.0));
  CHECK(head::sigmoid(0.0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("parameter gradients match central finite differences") {
  auto g = rng::substream(5, {rng::fnv1a64("head-fd")});
  const int c = 2, h = 7, w = 6;
  const Tensor3f f_t = random_tensor(g, c, h, w);
  const Tensor3f f_prev = random_tensor(g, c, h, w);
  head::HeadParams p = head::HeadParams::seeded(2 * c, 3, 5);
  std::vector<double> d_logit(static_cast<size_t>(h) * w);
  for (double& v : d_logit) v = rng::uniform(g, -1.0, 1.0);

  // Scalar functional L = sum d_logit * logit; its parameter gradient is
  // exactly what head_backward accumulates.
  const auto loss_of = [&](const head::HeadParams& q) {
    const std::vector<double> logits = head::head_logits(q, f_t, f_prev);
    double acc = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) acc += d_logit[i] * logits[i];
    return acc;
  };

  const head::HeadBackwardResult back = head::head_backward(p, f_t, f_prev, d_logit);
  const double eps = 1e-6;
  const auto check_slot = [&](double* slot, double analytic) {
    const double keep = *slot;
    *slot = keep + eps;
    const double hi = loss_of(p);
    *slot = keep - eps;
    const double lo = loss_of(p);
    *slot = keep;
    const double fd = (hi - lo) / (2.0 * eps);
    const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-8});
    CHECK(rel < 1e-4);
  };

  auto pick = rng::substream(6, {rng::fnv1a64("head-fd-pick")});
  for (int k = 0; k < 60; ++k) {
    const size_t i = static_cast<size_t>(rng::uniform01(pick) * static_cast<double>(p.w1.size()));
    check_slot(&p.w1[i], back.param_grads.w1[i]);
  }
  for (size_t i = 0; i < p.b1.size(); ++i) check_slot(&p.b1[i], back.param_grads.b1[i]);
  for (size_t i = 0; i < p.w2.size(); ++i) check_slot(&p.w2[i], back.param_grads.w2[i]);
  check_slot(&p.b2, back.param_grads.b2);
}

TEST_CASE("input gradients match central finite differences") {
  auto g = rng::substream(7, {rng::fnv1a64("head-fd-input")});
  const int c = 2, h = 6, w = 6;
  Tensor3f f_t = random_tensor(g, c, h, w);
  Tensor3f f_prev = random_tensor(g, c, h, w);
  const head::HeadParams p = head::HeadParams::seeded(2 * c, 3, 9);
  std::vector<double> d_logit(static_cast<size_t>(h) * w);
  for (double& v : d_logit) v = rng::uniform(g, -1.0, 1.0);

  const auto loss_now = [&]() {
    const std::vector<double> logits = head::head_logits(p, f_t, f_prev);
    double acc = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) acc += d_logit[i] * logits[i];
    return acc;
  };
  const head::HeadBackwardResult back = head::head_backward(p, f_t, f_prev, d_logit);

  const float eps = 1e-3f;
  auto pick = rng::substream(8, {rng::fnv1a64("head-fd-input-pick")});
  for (int k = 0; k < 40; ++k) {
    const bool current = rng::uniform01(pick) < 0.5;
    Tensor3f& t = current ? f_t : f_prev;
    const std::vector<double>& grad = current ? back.d_f_t : back.d_f_prev;
    const size_t i = static_cast<size_t>(rng::uniform01(pick) * static_cast<double>(t.v.size()));
    const float keep = t.v[i];
    t.v[i] = keep + eps;
    const double hi = loss_now();
    t.v[i] = keep - eps;
    const double lo = loss_now();
    t.v[i] = keep;
    const double fd = (hi - lo) / (2.0 * static_cast<double>(eps));
    const double rel =
        std::abs(fd - grad[i]) / std::max({std::abs(fd), std::abs(grad[i]), 1e-8});
    CHECK(rel < 1e-3);  // float inputs cap the attainable FD accuracy
  }
}

TEST_CASE("decode finds strict local maxima at cell centers") {
  const geom::BevGrid grid = geom::BevGrid::make(-5.0, -5.0, 0.5, 20, 20);
  head::ProbMap p = head::ProbMap::zeros(20, 20);
  for (double& v : p.p) v = 0.01;
  p.at(4, 6) = 0.9;
  p.at(4, 7) = 0.85;   // inside the radius-2 window of (4,6): suppressed
  p.at(12, 12) = 0.6;
  p.at(18, 2) = 0.29;  // below threshold

  const std::vector<Detection> dets = head::decode_detections(p, grid, 0.3, 2, 17);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].score == doctest::Approx(0.9));
  CHECK(dets[1].score == doctest::Approx(0.6));
  CHECK(dets[0].frame == 17);
  // Row 4, col 6 has its center at origin + (index + 0.5) * cell.
  CHECK(dets[0].x == doctest::Approx(-5.0 + 6.5 * 0.5));
  CHECK(dets[0].y == doctest::Approx(-5.0 + 4.5 * 0.5));
}

TEST_CASE("decode drops plateaus and orders ties by row then column") {
  const geom::BevGrid grid = geom::BevGrid::make(0.0, 0.0, 1.0, 16, 16);
  head::ProbMap p = head::ProbMap::zeros(16, 16);
  for (double& v : p.p) v = 0.01;
  // Two-cell plateau: neither is strictly greater, so neither is a peak.
  p.at(2, 2) = 0.7;
  p.at(2, 3) = 0.7;
  // Equal-score isolated peaks, distinct cells.
  p.at(8, 8) = 0.5;
  p.at(12, 4) = 0.5;
  const std::vector<Detection> dets = head::decode_detections(p, grid, 0.3, 2);
  REQUIRE(dets.size() == 2);
  CHECK(dets[0].y == doctest::Approx(8.5));  // row 8 before row 12 on equal score
  CHECK(dets[1].y == doctest::Approx(12.5));
}

TEST_CASE("suppression window honors its radius") {
  const geom::BevGrid grid = geom::BevGrid::make(0.0, 0.0, 1.0, 16, 16);
  head::ProbMap p = head::ProbMap::zeros(16, 16);
  for (double& v : p.p) v = 0.01;
  p.at(5, 5) = 0.8;
  p.at(5, 8) = 0.9;  // 3 cells away
  CHECK(head::decode_detections(p, grid, 0.3, 2).size() == 2);  // outside the window
  CHECK(head::decode_detections(p, grid, 0.3, 3).size() == 1);  // swallowed at radius 3
}

TEST_CASE("seeded init is reproducible and shaped by its fan-in") {
  const head::HeadParams a = head::HeadParams::seeded(8, 16, 42);
  const head::HeadParams b = head::HeadParams::seeded(8, 16, 42);
  const head::HeadParams c = head::HeadParams::seeded(8, 16, 43);
  CHECK(a.w1 == b.w1);
  CHECK(a.b1 == b.b1);
  CHECK(a.w2 == b.w2);
  CHECK(a.b2 == b.b2);
  CHECK(a.w1 != c.w1);
  CHECK(a.b2 == c.b2);  // the output bias is deterministic, not sampled

  const double bound1 = std::sqrt(6.0 / (8 * head::kTaps));
  for (double v : a.w1) CHECK(std::abs(v) <= bound1);
  for (double v : a.b1) CHECK(v == 0.0);
  bool any_nonzero = false;
  for (double v : a.w1) any_nonzero = any_nonzero || v != 0.0;
  CHECK(any_nonzero);
}

TEST_CASE("sgd step is a pure element-wise update") {
  const head::HeadParams p = head::HeadParams::seeded(4, 3, 11);
  head::HeadParams g = head::HeadParams::zeros(4, 3);
  for (size_t i = 0; i < g.w1.size(); ++i) g.w1[i] = 0.5 * static_cast<double>(i % 7) - 1.0;
  g.b1[1] = 2.0;
  g.w2[2] = -3.0;
  g.b2 = 0.25;
  const head::HeadParams next = head::sgd_step(p, g, 0.1);
  for (size_t i = 0; i < p.w1.size(); ++i)
    CHECK(next.w1[i] == doctest::Approx(p.w1[i] - 0.1 * g.w1[i]).epsilon(1e-15));
  CHECK(next.b1[1] == doctest::Approx(p.b1[1] - 0.2).epsilon(1e-15));
  CHECK(next.w2[2] == doctest::Approx(p.w2[2] + 0.3).epsilon(1e-15));
  CHECK(next.b2 == doctest::Approx(p.b2 - 0.025).epsilon(1e-15));
  CHECK_THROWS_AS(head::sgd_step(p, g, 0.0), ValidationError);
  CHECK_THROWS_AS(head::sgd_step(p, head::HeadParams::zeros(6, 3), 0.1), ValidationError);
}

TEST_CASE("head input validation") {
  const head::HeadParams p = head::HeadParams::seeded(4, 3, 1);
  const Tensor3f ok = Tensor3f::zeros(2, 5, 5);
  CHECK_THROWS_AS(head::head_forward(p, ok, Tensor3f::zeros(2, 5, 4)), ValidationError);
  CHECK_THROWS_AS(head::head_forward(p, Tensor3f::zeros(3, 5, 5), Tensor3f::zeros(3, 5, 5)),
                  ValidationError);
  CHECK_THROWS_AS(head::HeadParams::zeros(0, 3), ValidationError);
  const geom::BevGrid grid = geom::BevGrid::make(0.0, 0.0, 1.0, 5, 5);
  head::ProbMap pm = head::ProbMap::zeros(5, 5);
  for (double& v : pm.p) v = 0.4;
  CHECK_THROWS_AS(head::decode_detections(pm, grid, 0.0, 2), ValidationError);
  CHECK_THROWS_AS(head::decode_detections(pm, grid, 0.3, 0), ValidationError);
  CHECK_THROWS_AS(head::decode_detections(pm, geom::BevGrid::make(0, 0, 1.0, 6, 5), 0.3, 2),
                  ValidationError);
  std::vector<double> wrong(24, 0.0);
  CHECK_THROWS_AS(head::head_backward(p, ok, ok, wrong), ValidationError);
}
