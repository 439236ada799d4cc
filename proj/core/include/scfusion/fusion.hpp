#pragma once

#include <string>
#include <vector>

#include "scfusion/geometry.hpp"
#include "scfusion/tensor.hpp"

namespace scf::fusion {

using geom::BevGrid;
using geom::CameraModel;

enum class FusionRule { kWeighted, kConcat, kMean };

const char* fusion_rule_name(FusionRule r);
FusionRule fusion_rule_from_name(const std::string& name);

// Multi-view feature with a tag recording how the views were combined.
// Weighted and mean fusion keep the per-view channel count; concat stacks
// to S*C channels in camera order.
struct FusedFeature {
  FusionRule rule = FusionRule::kWeighted;
  Tensor3f f;
};

// Per-cell confidence-weighted sum over views, confidence broadcast across
// channels. With `normalized` the sum is divided by the total confidence
// where it is positive (off by default: the plain weighted sum is the
// reference behavior).
FusedFeature weighted_aggregate(const std::vector<BevFeature>& views,
                                const std::vector<ConfidenceMap>& confs, bool normalized = false);

// Channel stacking in view order: output channel s*C + c is view s, channel c.
FusedFeature concat_fuse(const std::vector<BevFeature>& views);

// Unweighted per-cell arithmetic mean over all views.
FusedFeature mean_fuse(const std::vector<BevFeature>& views);

// Distance-based view reliability: w = d_min / d with d the 3D distance
// from the camera center to the cell center on the ground, so the cell
// nearest the camera anchors the map at exactly 1.
ConfidenceMap density_weights_from_depth(const CameraModel& cam, const BevGrid& grid);

// Cell-wise product, the default way the Gaussian-mask confidence and the
// depth weights are merged before aggregation.
ConfidenceMap combine_confidence(const ConfidenceMap& a, const ConfidenceMap& b);

}  // namespace scf::fusion
