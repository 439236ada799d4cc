#pragma once

#include <cstdint>
#include <vector>

#include "scfusion/head.hpp"
#include "scfusion/losses.hpp"
#include "scfusion/tensor.hpp"

// Sparse evaluation paths for the detection head. Splatted BEV features are
// zero almost everywhere, so the head's logit differs from a parameter-only
// background value only where the dilated receptive field overlaps a nonzero
// input cell. Training and full-map inference exploit that: logits computed
// here match the dense head exactly, and the loss over a validity mask folds
// all background cells into one closed-form term.
namespace scf::train {

// One head input occupying a channel slice of the logical tensor the head
// sees: channels [offset, offset + t->c) come from `t`, everything else is
// zero. A null tensor is the all-zero input (the frame before the first).
// full_c is the logical per-frame channel count, half the head's in_c.
struct InputView {
  const Tensor3f* t = nullptr;
  int full_c = 0;
  int offset = 0;
};

inline InputView full_view(const Tensor3f& t) { return InputView{&t, t.c, 0}; }

// Flat row-major indices of cells where either input has a nonzero channel,
// ascending.
std::vector<int> nonzero_cells(const InputView& f_t, const InputView& f_prev, int h, int w);

// Bitmap of cells whose receptive field touches any nonzero input cell.
// Everywhere else the logit equals background_logit(params).
std::vector<uint8_t> active_bitmap(const InputView& f_t, const InputView& f_prev, int h, int w);

// The head's logit over an all-zero receptive field: b2 + sum w2*relu(b1).
double background_logit(const head::HeadParams& params);

// Logits at the given cells only; equal to the dense head_logits values.
std::vector<double> logits_at(const head::HeadParams& params, const InputView& f_t,
                              const InputView& f_prev, int h, int w,
                              const std::vector<int>& cells);

// Full probability map assembled sparsely; equals head_forward on the
// equivalent dense tensors.
head::ProbMap sparse_forward(const head::HeadParams& params, const InputView& f_t,
                             const InputView& f_prev, int h, int w);

// Focal loss of the head output against `gt` over the valid cells (null
// mask means every cell), with analytic parameter gradients. Input
// gradients are not produced: features are fixed during training. Valid
// cells outside the active set share the background logit, so their loss
// and gradient contributions reduce to per-class counts.
struct SparseLoss {
  double loss = 0.0;
  head::HeadParams grads;
};

// `active` may pass a precomputed active_bitmap of the same inputs (they
// are constant across training epochs); null recomputes it.
SparseLoss head_focal_step(const head::HeadParams& params, const InputView& f_t,
                           const InputView& f_prev, int h, int w, const head::GtHeatmap& gt,
                           const Mask* valid, const losses::LossConfig& cfg,
                           const std::vector<uint8_t>* active = nullptr);

// acc += scale * g over every parameter; shapes must agree.
void axpy(double scale, const head::HeadParams& g, head::HeadParams* acc);

}  // namespace scf::train
