#include "scfusion/head.hpp"

#include <algorithm>
#include <cmath>

#include "scfusion/errors.hpp"
#include "scfusion/rng.hpp"

namespace scf::head {

ProbMap ProbMap::zeros(int h, int w) {
  if (h <= 0 || w <= 0) throw ValidationError("probability map dims must be positive");
  return ProbMap{h, w, std::vector<double>(static_cast<size_t>(h) * w, 0.0)};
}

GtHeatmap GtHeatmap::zeros(int h, int w) {
  if (h <= 0 || w <= 0) throw ValidationError("heatmap dims must be positive");
  return GtHeatmap{h, w, std::vector<uint8_t>(static_cast<size_t>(h) * w, 0)};
}

HeadParams HeadParams::zeros(int in_c, int hidden) {
  if (in_c <= 0 || hidden <= 0) throw ValidationError("head channel counts must be positive");
  HeadParams p;
  p.in_c = in_c;
  p.hidden = hidden;
  p.w1.assign(static_cast<size_t>(hidden) * in_c * kTaps, 0.0);
  p.b1.assign(static_cast<size_t>(hidden), 0.0);
  p.w2.assign(static_cast<size_t>(hidden), 0.0);
  p.b2 = 0.0;
  return p;
}

HeadParams HeadParams::seeded(int in_c, int hidden, uint64_t seed) {
  HeadParams p = zeros(in_c, hidden);
  auto g = rng::substream(seed, {rng::fnv1a64("head-init")});
  const double s1 = std::sqrt(6.0 / (static_cast<double>(in_c) * kTaps));
  for (double& w : p.w1) w = rng::uniform(g, -s1, s1);
  const double s2 = std::sqrt(6.0 / static_cast<double>(hidden));
  for (double& w : p.w2) w = rng::uniform(g, -s2, s2);
  // Biases start at zero except the output bias, pulled negative so the
  // initial occupancy prior is well below 0.5 (cells are mostly empty).
  p.b2 = -2.0;
  return p;
}

double sigmoid(double logit) {
  const double l = std::clamp(logit, -36.0, 36.0);
  return 1.0 / (1.0 + std::exp(-l));
}

namespace {

void check_head_inputs(const HeadParams& params, const Tensor3f& f_t, const Tensor3f& f_prev) {
  if (!f_t.same_shape(f_prev)) throw ValidationError("current and previous features differ in shape");
  if (params.in_c != 2 * f_t.c)
    throw ValidationError("head expects twice the feature channels after temporal concat");
  if (params.b1.size() != static_cast<size_t>(params.hidden) ||
      params.w2.size() != static_cast<size_t>(params.hidden) ||
      params.w1.size() != static_cast<size_t>(params.hidden) * params.in_c * kTaps)
    throw ValidationError("head parameter shapes are inconsistent");
}

// Gathers the zero-padded dilated receptive field of one cell into
// patch[i*kTaps + tap] so the per-filter work becomes a contiguous dot
// product.
void gather_patch(const Tensor3f& f_t, const Tensor3f& f_prev, int y, int x,
                  std::vector<double>& patch) {
  const int c = f_t.c;
  const int h = f_t.h;
  const int w = f_t.w;
  std::fill(patch.begin(), patch.end(), 0.0);
  for (int ky = 0; ky < kKernel; ++ky) {
    const int yy = y + kDilation * (ky - kKernel / 2);
    if (yy < 0 || yy >= h) continue;
    for (int kx = 0; kx < kKernel; ++kx) {
      const int xx = x + kDilation * (kx - kKernel / 2);
      if (xx < 0 || xx >= w) continue;
      const int tap = ky * kKernel + kx;
      for (int i = 0; i < c; ++i) {
        patch[static_cast<size_t>(i) * kTaps + tap] = f_t.at(i, yy, xx);
        patch[static_cast<size_t>(c + i) * kTaps + tap] = f_prev.at(i, yy, xx);
      }
    }
  }
}

}  // namespace

std::vector<double> head_logits(const HeadParams& params, const Tensor3f& f_t,
                                const Tensor3f& f_prev) {
  check_head_inputs(params, f_t, f_prev);
  const int h = f_t.h;
  const int w = f_t.w;
  std::vector<double> logits(static_cast<size_t>(h) * w);
  std::vector<double> patch(static_cast<size_t>(params.in_c) * kTaps);
  const size_t per_filter = static_cast<size_t>(params.in_c) * kTaps;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      gather_patch(f_t, f_prev, y, x, patch);
      double logit = params.b2;
      for (int f = 0; f < params.hidden; ++f) {
        const double* wf = params.w1.data() + static_cast<size_t>(f) * per_filter;
        double pre = params.b1[static_cast<size_t>(f)];
        for (size_t k = 0; k < per_filter; ++k) pre += wf[k] * patch[k];
        if (pre > 0.0) logit += params.w2[static_cast<size_t>(f)] * pre;
      }
      logits[static_cast<size_t>(y) * w + x] = logit;
    }
  }
  return logits;
}

ProbMap head_forward(const HeadParams& params, const Tensor3f& f_t, const Tensor3f& f_prev) {
  const std::vector<double> logits = head_logits(params, f_t, f_prev);
  ProbMap out = ProbMap::zeros(f_t.h, f_t.w);
  for (size_t i = 0; i < logits.size(); ++i) out.p[i] = sigmoid(logits[i]);
  return out;
}

HeadBackwardResult head_backward(const HeadParams& params, const Tensor3f& f_t,
                                 const Tensor3f& f_prev, const std::vector<double>& d_logit) {
  check_head_inputs(params, f_t, f_prev);
  const int h = f_t.h;
  const int w = f_t.w;
  const int c = f_t.c;
  if (d_logit.size() != static_cast<size_t>(h) * w)
    throw ValidationError("upstream gradient shape does not match the feature grid");

  HeadBackwardResult res{HeadParams::zeros(params.in_c, params.hidden),
                         std::vector<double>(static_cast<size_t>(c) * h * w, 0.0),
                         std::vector<double>(static_cast<size_t>(c) * h * w, 0.0)};
  std::vector<double> patch(static_cast<size_t>(params.in_c) * kTaps);
  const size_t per_filter = patch.size();

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = d_logit[static_cast<size_t>(y) * w + x];
      if (d == 0.0) continue;
      gather_patch(f_t, f_prev, y, x, patch);
      res.param_grads.b2 += d;
      for (int f = 0; f < params.hidden; ++f) {
        const double* wf = params.w1.data() + static_cast<size_t>(f) * per_filter;
        double pre = params.b1[static_cast<size_t>(f)];
        for (size_t k = 0; k < per_filter; ++k) pre += wf[k] * patch[k];
        if (pre <= 0.0) continue;  // ReLU gate: inactive filters carry nothing
        res.param_grads.w2[static_cast<size_t>(f)] += d * pre;
        const double da = d * params.w2[static_cast<size_t>(f)];
        res.param_grads.b1[static_cast<size_t>(f)] += da;
        double* dwf = res.param_grads.w1.data() + static_cast<size_t>(f) * per_filter;
        for (size_t k = 0; k < per_filter; ++k) dwf[k] += da * patch[k];
        // Input gradient: scatter da * w1 back through the receptive field.
        for (int ky = 0; ky < kKernel; ++ky) {
          const int yy = y + kDilation * (ky - kKernel / 2);
          if (yy < 0 || yy >= h) continue;
          for (int kx = 0; kx < kKernel; ++kx) {
            const int xx = x + kDilation * (kx - kKernel / 2);
            if (xx < 0 || xx >= w) continue;
            const int tap = ky * kKernel + kx;
            for (int i = 0; i < c; ++i) {
              const size_t cell = (static_cast<size_t>(i) * h + yy) * w + xx;
              res.d_f_t[cell] += da * wf[static_cast<size_t>(i) * kTaps + tap];
              res.d_f_prev[cell] += da * wf[static_cast<size_t>(c + i) * kTaps + tap];
            }
          }
        }
      }
    }
  }
  return res;
}

std::vector<Detection> decode_detections(const ProbMap& p, const geom::BevGrid& grid,
                                         double threshold, int nms_radius, int frame) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ValidationError("threshold must be in (0,1)");
  if (nms_radius < 1) throw ValidationError("suppression radius must be >= 1");
  if (p.h != grid.height || p.w != grid.width)
    throw ValidationError("probability map does not match the grid");

  struct Hit {
    int row, col;
    double score;
  };
  std::vector<Hit> hits;
  for (int row = 0; row < p.h; ++row) {
    for (int col = 0; col < p.w; ++col) {
      const double v = p.at(row, col);
      if (v < threshold) continue;
      bool is_max = true;
      for (int dy = -nms_radius; dy <= nms_radius && is_max; ++dy) {
        const int yy = row + dy;
        if (yy < 0 || yy >= p.h) continue;
        for (int dx = -nms_radius; dx <= nms_radius; ++dx) {
          const int xx = col + dx;
          if (xx < 0 || xx >= p.w || (dy == 0 && dx == 0)) continue;
          if (p.at(yy, xx) >= v) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) hits.push_back({row, col, v});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.row != b.row) return a.row < b.row;
    return a.col < b.col;
  });
  std::vector<Detection> out;
  out.reserve(hits.size());
  for (const Hit& hit : hits) {
    const Eigen::Vector2d xy = grid.world_of(hit.row, hit.col);
    out.push_back(Detection{frame, xy.x(), xy.y(), hit.score});
  }
  return out;
}

HeadParams sgd_step(const HeadParams& params, const HeadParams& grads, double lr) {
  if (!(lr > 0.0)) throw ValidationError("learning rate must be positive");
  if (params.in_c != grads.in_c || params.hidden != grads.hidden)
    throw ValidationError("gradient shapes do not match parameters");
  HeadParams out = params;
  for (size_t i = 0; i < out.w1.size(); ++i) out.w1[i] -= lr * grads.w1[i];
  for (size_t i = 0; i < out.b1.size(); ++i) out.b1[i] -= lr * grads.b1[i];
  for (size_t i = 0; i < out.w2.size(); ++i) out.w2[i] -= lr * grads.w2[i];
  out.b2 -= lr * grads.b2;
  return out;
}

}  // namespace scf::head
