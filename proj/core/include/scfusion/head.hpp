#pragma once

#include <cstdint>
#include <vector>

#include "scfusion/detection.hpp"
#include "scfusion/geometry.hpp"
#include "scfusion/tensor.hpp"

namespace scf::head {

// Architecture constants: one 5x5 dilation-2 convolution expanding the
// receptive field at full resolution, ReLU, then a 1x1 projection to a
// single logit per cell.
inline constexpr int kKernel = 5;
inline constexpr int kDilation = 2;
inline constexpr int kTaps = kKernel * kKernel;

// Per-cell occupancy probabilities, strictly inside (0,1). Stored in
// double: training math stays 64-bit end to end.
struct ProbMap {
  int h = 0, w = 0;
  std::vector<double> p;

  static ProbMap zeros(int h, int w);
  size_t idx(int y, int x) const { return static_cast<size_t>(y) * w + x; }
  double at(int y, int x) const { return p[idx(y, x)]; }
  double& at(int y, int x) { return p[idx(y, x)]; }
};

// Binary occupancy targets; one 1 per object's occupied cell, collisions
// merged.
struct GtHeatmap {
  int h = 0, w = 0;
  std::vector<uint8_t> y;

  static GtHeatmap zeros(int h, int w);
  size_t idx(int row, int col) const { return static_cast<size_t>(row) * w + col; }
  uint8_t at(int row, int col) const { return y[idx(row, col)]; }
  uint8_t& at(int row, int col) { return y[idx(row, col)]; }
};

// Trainable parameters. w1 is laid out [out][in][ky][kx]; the same struct
// doubles as the gradient container. Serialization order: w1, b1, w2, b2.
struct HeadParams {
  int in_c = 0;    // channels after temporal concat (2x feature channels)
  int hidden = 0;  // F
  std::vector<double> w1;  // hidden * in_c * 25
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;

  static HeadParams zeros(int in_c, int hidden);
  // Uniform fan-in init, reproducible from the seed alone.
  static HeadParams seeded(int in_c, int hidden, uint64_t seed);
  size_t w1_idx(int o, int i, int ky, int kx) const {
    return ((static_cast<size_t>(o) * in_c + i) * kKernel + ky) * kKernel + kx;
  }
  size_t param_count() const { return w1.size() + b1.size() + w2.size() + 1; }
};

double sigmoid(double logit);  // logit clamped to +-36 so the result stays in (0,1)

// concat(f_t, f_prev) -> dilated 5x5 conv (zero padded) -> ReLU -> 1x1 conv
// -> sigmoid. f_prev is the previous frame's feature, all-zero at t=0.
ProbMap head_forward(const HeadParams& params, const Tensor3f& f_t, const Tensor3f& f_prev);

// Pre-sigmoid logits of the same computation, for loss plumbing and tests.
std::vector<double> head_logits(const HeadParams& params, const Tensor3f& f_t,
                                const Tensor3f& f_prev);

struct HeadBackwardResult {
  HeadParams param_grads;
  // Gradients w.r.t. the two input tensors, channel-major like Tensor3f.
  std::vector<double> d_f_t;
  std::vector<double> d_f_prev;
};

// Analytic gradients of the forward pass given upstream dLoss/dlogit per
// cell (h*w, row-major).
HeadBackwardResult head_backward(const HeadParams& params, const Tensor3f& f_t,
                                 const Tensor3f& f_prev, const std::vector<double>& d_logit);

// Strict local maxima of p within a (2r+1)^2 window, at or above threshold,
// reported at cell centers in world coordinates; sorted by descending
// score, ties by (row, col).
std::vector<Detection> decode_detections(const ProbMap& p, const geom::BevGrid& grid,
                                         double threshold, int nms_radius, int frame = 0);

// params - lr * grads, element-wise.
HeadParams sgd_step(const HeadParams& params, const HeadParams& grads, double lr);

}  // namespace scf::head
