#include "scfusion/train.hpp"

#include <algorithm>
#include <cmath>

#include "scfusion/errors.hpp"

namespace scf::train {

namespace {

using head::kDilation;
using head::kKernel;
using head::kTaps;

void check_view(const InputView& v, int h, int w) {
  if (v.full_c <= 0) throw ValidationError("head input channel count must be positive");
  if (v.t == nullptr) return;
  if (v.offset < 0 || v.offset + v.t->c > v.full_c)
    throw ValidationError("channel slice falls outside the head input");
  if (v.t->h != h || v.t->w != w)
    throw ValidationError("head input does not match the grid dims");
}

void check_pair(const head::HeadParams& params, const InputView& f_t, const InputView& f_prev,
                int h, int w) {
  if (h <= 0 || w <= 0) throw ValidationError("grid dims must be positive");
  check_view(f_t, h, w);
  check_view(f_prev, h, w);
  if (f_t.full_c != f_prev.full_c)
    throw ValidationError("current and previous features differ in channel width");
  if (params.in_c != 2 * f_t.full_c)
    throw ValidationError("head expects twice the feature channels after temporal concat");
  if (params.b1.size() != static_cast<size_t>(params.hidden) ||
      params.w2.size() != static_cast<size_t>(params.hidden) ||
      params.w1.size() != static_cast<size_t>(params.hidden) * params.in_c * kTaps)
    throw ValidationError("head parameter shapes are inconsistent");
}

// The taps of one input for one output cell, aligned to the input's global
// channel slice. Channels the view does not back are simply absent: their
// products with w1 would be exact zeros, so skipping them leaves the dense
// accumulation sequence unchanged.
struct SpanPatch {
  int c0 = 0;  // first global input channel of the slice
  int nc = 0;
  std::vector<double> vals;  // nc * kTaps, [c * kTaps + tap] like the dense patch
};

void gather_span(const InputView& v, int first_c, int y, int x, int h, int w, SpanPatch& out) {
  out.c0 = first_c + v.offset;
  out.nc = v.t ? v.t->c : 0;
  out.vals.assign(static_cast<size_t>(out.nc) * kTaps, 0.0);
  if (!v.t) return;
  for (int ky = 0; ky < kKernel; ++ky) {
    const int yy = y + kDilation * (ky - kKernel / 2);
    if (yy < 0 || yy >= h) continue;
    for (int kx = 0; kx < kKernel; ++kx) {
      const int xx = x + kDilation * (kx - kKernel / 2);
      if (xx < 0 || xx >= w) continue;
      const int tap = ky * kKernel + kx;
      for (int c = 0; c < out.nc; ++c)
        out.vals[static_cast<size_t>(c) * kTaps + tap] = v.t->at(c, yy, xx);
    }
  }
}

// pre += the slice's terms of the dense dot product, in dense order.
void add_span(const double* wf, const SpanPatch& s, double& pre) {
  for (int c = 0; c < s.nc; ++c) {
    const double* w = wf + static_cast<size_t>(s.c0 + c) * kTaps;
    const double* v = s.vals.data() + static_cast<size_t>(c) * kTaps;
    for (int k = 0; k < kTaps; ++k) pre += w[k] * v[k];
  }
}

// Pre-activations of every filter at one gathered cell.
void cell_pres(const head::HeadParams& params, const SpanPatch& a, const SpanPatch& b,
               std::vector<double>& pres) {
  const size_t per_filter = static_cast<size_t>(params.in_c) * kTaps;
  pres.resize(static_cast<size_t>(params.hidden));
  for (int f = 0; f < params.hidden; ++f) {
    const double* wf = params.w1.data() + static_cast<size_t>(f) * per_filter;
    double pre = params.b1[static_cast<size_t>(f)];
    add_span(wf, a, pre);
    add_span(wf, b, pre);
    pres[static_cast<size_t>(f)] = pre;
  }
}

double logit_of_pres(const head::HeadParams& params, const std::vector<double>& pres) {
  double logit = params.b2;
  for (int f = 0; f < params.hidden; ++f) {
    const double pre = pres[static_cast<size_t>(f)];
    if (pre > 0.0) logit += params.w2[static_cast<size_t>(f)] * pre;
  }
  return logit;
}

// Parameter gradients of one cell's logit scaled by upstream d; the w1 rows
// only receive the slice taps (the rest would get d * 0).
void scatter_cell(const head::HeadParams& params, const SpanPatch& a, const SpanPatch& b,
                  const std::vector<double>& pres, double d, head::HeadParams* grads) {
  const size_t per_filter = static_cast<size_t>(params.in_c) * kTaps;
  grads->b2 += d;
  for (int f = 0; f < params.hidden; ++f) {
    const double pre = pres[static_cast<size_t>(f)];
    if (pre <= 0.0) continue;
    grads->w2[static_cast<size_t>(f)] += d * pre;
    const double da = d * params.w2[static_cast<size_t>(f)];
    grads->b1[static_cast<size_t>(f)] += da;
    double* dwf = grads->w1.data() + static_cast<size_t>(f) * per_filter;
    for (const SpanPatch* s : {&a, &b}) {
      for (int c = 0; c < s->nc; ++c) {
        double* dw = dwf + static_cast<size_t>(s->c0 + c) * kTaps;
        const double* v = s->vals.data() + static_cast<size_t>(c) * kTaps;
        for (int k = 0; k < kTaps; ++k) dw[k] += da * v[k];
      }
    }
  }
}

// Same gradient path for a cell with an all-zero receptive field, where
// pre = b1 and the patch is zero.
void scatter_background(const head::HeadParams& params, double d, head::HeadParams* grads) {
  grads->b2 += d;
  for (int f = 0; f < params.hidden; ++f) {
    const double pre = params.b1[static_cast<size_t>(f)];
    if (pre <= 0.0) continue;
    grads->w2[static_cast<size_t>(f)] += d * pre;
    grads->b1[static_cast<size_t>(f)] += d * params.w2[static_cast<size_t>(f)];
  }
}

void mark_nonzero(const InputView& v, std::vector<uint8_t>& bm, int h, int w) {
  if (!v.t) return;
  const Tensor3f& t = *v.t;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t cell = static_cast<size_t>(y) * w + x;
      if (bm[cell]) continue;
      for (int c = 0; c < t.c; ++c) {
        if (t.at(c, y, x) != 0.0f) {
          bm[cell] = 1;
          break;
        }
      }
    }
  }
}

}  // namespace

std::vector<int> nonzero_cells(const InputView& f_t, const InputView& f_prev, int h, int w) {
  check_view(f_t, h, w);
  check_view(f_prev, h, w);
  std::vector<uint8_t> bm(static_cast<size_t>(h) * w, 0);
  mark_nonzero(f_t, bm, h, w);
  mark_nonzero(f_prev, bm, h, w);
  std::vector<int> cells;
  for (size_t i = 0; i < bm.size(); ++i)
    if (bm[i]) cells.push_back(static_cast<int>(i));
  return cells;
}

std::vector<uint8_t> active_bitmap(const InputView& f_t, const InputView& f_prev, int h, int w) {
  const std::vector<int> nz = nonzero_cells(f_t, f_prev, h, w);
  std::vector<uint8_t> active(static_cast<size_t>(h) * w, 0);
  for (int cell : nz) {
    const int y = cell / w;
    const int x = cell % w;
    // The tap offsets are symmetric, so dilating by the same stencil marks
    // exactly the outputs that read this cell.
    for (int ky = 0; ky < kKernel; ++ky) {
      const int yy = y + kDilation * (ky - kKernel / 2);
      if (yy < 0 || yy >= h) continue;
      for (int kx = 0; kx < kKernel; ++kx) {
        const int xx = x + kDilation * (kx - kKernel / 2);
        if (xx < 0 || xx >= w) continue;
        active[static_cast<size_t>(yy) * w + xx] = 1;
      }
    }
  }
  return active;
}

double background_logit(const head::HeadParams& params) {
  double logit = params.b2;
  for (int f = 0; f < params.hidden; ++f) {
    const double pre = params.b1[static_cast<size_t>(f)];
    if (pre > 0.0) logit += params.w2[static_cast<size_t>(f)] * pre;
  }
  return logit;
}

std::vector<double> logits_at(const head::HeadParams& params, const InputView& f_t,
                              const InputView& f_prev, int h, int w,
                              const std::vector<int>& cells) {
  check_pair(params, f_t, f_prev, h, w);
  std::vector<double> out(cells.size());
  SpanPatch a, b;
  std::vector<double> pres;
  for (size_t i = 0; i < cells.size(); ++i) {
    const int cell = cells[i];
    if (cell < 0 || cell >= h * w) throw ValidationError("cell index outside the grid");
    gather_span(f_t, 0, cell / w, cell % w, h, w, a);
    gather_span(f_prev, f_t.full_c, cell / w, cell % w, h, w, b);
    cell_pres(params, a, b, pres);
    out[i] = logit_of_pres(params, pres);
  }
  return out;
}

head::ProbMap sparse_forward(const head::HeadParams& params, const InputView& f_t,
                             const InputView& f_prev, int h, int w) {
  check_pair(params, f_t, f_prev, h, w);
  const std::vector<uint8_t> active = active_bitmap(f_t, f_prev, h, w);
  head::ProbMap out = head::ProbMap::zeros(h, w);
  const double p_bg = head::sigmoid(background_logit(params));
  std::fill(out.p.begin(), out.p.end(), p_bg);
  SpanPatch a, b;
  std::vector<double> pres;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!active[static_cast<size_t>(y) * w + x]) continue;
      gather_span(f_t, 0, y, x, h, w, a);
      gather_span(f_prev, f_t.full_c, y, x, h, w, b);
      cell_pres(params, a, b, pres);
      out.at(y, x) = head::sigmoid(logit_of_pres(params, pres));
    }
  }
  return out;
}

SparseLoss head_focal_step(const head::HeadParams& params, const InputView& f_t,
                           const InputView& f_prev, int h, int w, const head::GtHeatmap& gt,
                           const Mask* valid, const losses::LossConfig& cfg,
                           const std::vector<uint8_t>* active_in) {
  check_pair(params, f_t, f_prev, h, w);
  cfg.validate();
  if (gt.h != h || gt.w != w) throw ValidationError("heatmap does not match the grid dims");
  if (valid && (valid->h != h || valid->w != w))
    throw ValidationError("validity mask does not match the grid dims");
  if (active_in && active_in->size() != static_cast<size_t>(h) * w)
    throw ValidationError("active bitmap does not match the grid dims");

  const std::vector<uint8_t> computed =
      active_in ? std::vector<uint8_t>() : active_bitmap(f_t, f_prev, h, w);
  const std::vector<uint8_t>& active = active_in ? *active_in : computed;
  const double p_bg = head::sigmoid(background_logit(params));

  SparseLoss res;
  res.grads = head::HeadParams::zeros(params.in_c, params.hidden);

  SpanPatch a, b;
  std::vector<double> pres;
  long n_bg_neg = 0, n_bg_pos = 0;
  const size_t n = static_cast<size_t>(h) * w;
  for (size_t cell = 0; cell < n; ++cell) {
    if (valid && !valid->v[cell]) continue;
    const bool positive = gt.y[cell] != 0;
    if (!active[cell]) {
      (positive ? n_bg_pos : n_bg_neg) += 1;
      continue;
    }
    const int y = static_cast<int>(cell) / w;
    const int x = static_cast<int>(cell) % w;
    gather_span(f_t, 0, y, x, h, w, a);
    gather_span(f_prev, f_t.full_c, y, x, h, w, b);
    cell_pres(params, a, b, pres);
    const double p = head::sigmoid(logit_of_pres(params, pres));
    const losses::CellLoss cl = losses::focal_cell(p, positive, cfg);
    res.loss += cl.loss;
    const double d = cl.d_p * p * (1.0 - p);
    if (d != 0.0) scatter_cell(params, a, b, pres, d, &res.grads);
  }

  // Every valid cell outside the active set shares p_bg, so the whole
  // remainder is two focal evaluations scaled by class counts.
  double d_bg = 0.0;
  if (n_bg_neg > 0) {
    const losses::CellLoss cl = losses::focal_cell(p_bg, false, cfg);
    res.loss += static_cast<double>(n_bg_neg) * cl.loss;
    d_bg += static_cast<double>(n_bg_neg) * cl.d_p;
  }
  if (n_bg_pos > 0) {
    const losses::CellLoss cl = losses::focal_cell(p_bg, true, cfg);
    res.loss += static_cast<double>(n_bg_pos) * cl.loss;
    d_bg += static_cast<double>(n_bg_pos) * cl.d_p;
  }
  d_bg *= p_bg * (1.0 - p_bg);
  if (d_bg != 0.0) scatter_background(params, d_bg, &res.grads);
  return res;
}

void axpy(double scale, const head::HeadParams& g, head::HeadParams* acc) {
  if (g.in_c != acc->in_c || g.hidden != acc->hidden)
    throw ValidationError("gradient shapes do not match parameters");
  for (size_t i = 0; i < g.w1.size(); ++i) acc->w1[i] += scale * g.w1[i];
  for (size_t i = 0; i < g.b1.size(); ++i) acc->b1[i] += scale * g.b1[i];
  for (size_t i = 0; i < g.w2.size(); ++i) acc->w2[i] += scale * g.w2[i];
  acc->b2 += scale * g.b2;
}

}  // namespace scf::train
