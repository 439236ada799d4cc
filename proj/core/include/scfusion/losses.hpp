#pragma once

#include <vector>

#include "scfusion/head.hpp"
#include "scfusion/tensor.hpp"

namespace scf::losses {

using head::GtHeatmap;
using head::ProbMap;

struct LossConfig {
  double alpha = 2.0;
  double gamma = 4.0;
  double beta = 0.1;
  // Default modulator is (1-p)^gamma on both positive and negative terms.
  // The alternative tracks the predicted probability of the true class
  // (p^gamma on negatives), which drives near-perfect negatives to zero
  // loss much faster.
  bool centernet_variant = false;

  void validate() const;
};

struct LossReport {
  double l_single = 0.0;
  double l_multi = 0.0;
  double l_det = 0.0;
  std::vector<double> per_camera;
};

// Loss and d(loss)/dp for one cell. p is clamped to [1e-7, 1-1e-7] inside
// the differentiated function, so the gradient is exactly zero in the
// clamped region.
struct CellLoss {
  double loss = 0.0;
  double d_p = 0.0;
};
CellLoss focal_cell(double p, bool positive, const LossConfig& cfg);

struct FocalResult {
  double loss = 0.0;
  std::vector<double> d_p;  // h*w, zero at invalid cells
};

// loss = -sum over valid cells of alpha*(1-p)^gamma*[y log p + (1-y) log(1-p)].
// A null valid mask means every cell counts.
FocalResult focal_loss_map(const ProbMap& p, const GtHeatmap& y, const LossConfig& cfg,
                           const Mask* valid = nullptr);

// Sum of per-camera focal losses, each under its own validity mask.
double single_view_loss(const std::vector<ProbMap>& probs, const std::vector<GtHeatmap>& gts,
                        const std::vector<Mask>& masks, const LossConfig& cfg,
                        std::vector<double>* per_camera = nullptr);

// beta * l_single + l_multi.
double combined_loss(double l_single, double l_multi, const LossConfig& cfg);

}  // namespace scf::losses
