#pragma once

#include <utility>
#include <vector>

#include "scfusion/geometry.hpp"
#include "scfusion/tensor.hpp"

namespace scf::proj {

using geom::BevGrid;
using geom::CameraModel;

// Truncated, renormalized Gaussian smoothing kernel. size must be odd;
// discretized weights sum to 1 within 1e-12.
struct KernelSpec {
  double sigma = 1.0;
  int size = 5;

  static KernelSpec make(double sigma, int size);
  // size*size row-major weights, normalized.
  std::vector<double> discretize() const;
};

// How multiple source pixels landing in one BEV cell combine. Mean keeps
// near-field density from inflating magnitudes; Max is the ablation
// alternative.
enum class SplatRule { kMean, kMax };

// Dense baseline: inverse-warp every BEV cell center into the image and
// bilinearly sample (border-clamped), zero outside the view. The feature
// map must cover the sensor at an integer stride: image_w == W*stride.
BevFeature bilinear_project(const FeatureMap& fm, const CameraModel& cam, const BevGrid& grid,
                            int stride = 1);

struct SplatResult {
  BevFeature feature;
  Mask mask;                    // nonzero-footprint mask of `feature`
  std::vector<int32_t> counts;  // contributors per cell, height*width
};

// Sparse forward splat: each source pixel is carried along its ray to the
// ground plane; pixels whose intersection falls outside the grid are
// dropped. Cells with k >= 1 contributors store the channel-wise mean (or
// max), untouched cells stay exactly zero. `counts` supports the
// conservation check sum(feature * count) == sum(in-grid source pixels).
SplatResult spt_project_detail(const FeatureMap& fm, const CameraModel& cam, const BevGrid& grid,
                               int stride = 1, SplatRule rule = SplatRule::kMean);

std::pair<BevFeature, Mask> spt_project(const FeatureMap& fm, const CameraModel& cam,
                                        const BevGrid& grid, int stride = 1,
                                        SplatRule rule = SplatRule::kMean);

// Cell is valid iff any channel there is nonzero (exact comparison).
Mask make_mask(const BevFeature& bf);

// 2D correlation of the normalized kernel with the mask, zero-padded.
ConfidenceMap confidence_map(const Mask& m, const KernelSpec& k);

}  // namespace scf::proj
