#include "scfusion/fusion.hpp"

#include <cmath>
#include <limits>

#include "scfusion/errors.hpp"

namespace scf::fusion {

const char* fusion_rule_name(FusionRule r) {
  switch (r) {
    case FusionRule::kWeighted: return "weighted";
    case FusionRule::kConcat: return "concat";
    case FusionRule::kMean: return "mean";
  }
  throw ValidationError("unknown fusion rule");
}

FusionRule fusion_rule_from_name(const std::string& name) {
  if (name == "weighted") return FusionRule::kWeighted;
  if (name == "concat") return FusionRule::kConcat;
  if (name == "mean" || name == "unweighted-mean") return FusionRule::kMean;
  throw ValidationError("unknown fusion rule: " + name);
}

namespace {

void check_views(const std::vector<BevFeature>& views) {
  if (views.empty()) throw ValidationError("fusion requires at least one view");
  for (const auto& v : views)
    if (!v.same_shape(views.front())) throw ValidationError("view shapes do not match");
}

}  // namespace

FusedFeature weighted_aggregate(const std::vector<BevFeature>& views,
                                const std::vector<ConfidenceMap>& confs, bool normalized) {
  check_views(views);
  if (confs.size() != views.size())
    throw ValidationError("one confidence map per view is required");
  const int c = views.front().c;
  const int h = views.front().h;
  const int w = views.front().w;
  for (const auto& cm : confs)
    if (cm.h != h || cm.w != w) throw ValidationError("confidence map shape does not match views");

  FusedFeature out{FusionRule::kWeighted, Tensor3f::zeros(c, h, w)};
  const size_t plane = static_cast<size_t>(h) * w;
  std::vector<double> acc(plane);
  for (int ch = 0; ch < c; ++ch) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (size_t s = 0; s < views.size(); ++s) {
      const float* f = views[s].v.data() + static_cast<size_t>(ch) * plane;
      const float* conf = confs[s].v.data();
      for (size_t i = 0; i < plane; ++i) acc[i] += static_cast<double>(f[i]) * conf[i];
    }
    float* dst = out.f.v.data() + static_cast<size_t>(ch) * plane;
    if (!normalized) {
      for (size_t i = 0; i < plane; ++i) dst[i] = static_cast<float>(acc[i]);
    } else {
      for (size_t i = 0; i < plane; ++i) {
        double total = 0.0;
        for (const auto& cm : confs) total += cm.v[i];
        dst[i] = total > 0.0 ? static_cast<float>(acc[i] / total) : 0.0f;
      }
    }
  }
  return out;
}

FusedFeature concat_fuse(const std::vector<BevFeature>& views) {
  check_views(views);
  const int c = views.front().c;
  const int h = views.front().h;
  const int w = views.front().w;
  FusedFeature out{FusionRule::kConcat, Tensor3f::zeros(c * static_cast<int>(views.size()), h, w)};
  const size_t plane = static_cast<size_t>(h) * w;
  for (size_t s = 0; s < views.size(); ++s)
    std::copy(views[s].v.begin(), views[s].v.end(),
              out.f.v.begin() + static_cast<size_t>(s) * c * plane);
  return out;
}

FusedFeature mean_fuse(const std::vector<BevFeature>& views) {
  check_views(views);
  FusedFeature out{FusionRule::kMean,
                   Tensor3f::zeros(views.front().c, views.front().h, views.front().w)};
  const double inv = 1.0 / static_cast<double>(views.size());
  for (size_t i = 0; i < out.f.v.size(); ++i) {
    double acc = 0.0;
    for (const auto& v : views) acc += v.v[i];
    out.f.v[i] = static_cast<float>(acc * inv);
  }
  return out;
}

ConfidenceMap density_weights_from_depth(const CameraModel& cam, const BevGrid& grid) {
  ConfidenceMap out = ConfidenceMap::zeros(grid.height, grid.width);
  const Eigen::Vector3d c = cam.center();
  double d_min = std::numeric_limits<double>::infinity();
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const Eigen::Vector2d xy = grid.world_of(row, col);
      const double d = (Eigen::Vector3d(xy.x(), xy.y(), 0.0) - c).norm();
      out.at(row, col) = static_cast<float>(d);
      d_min = std::min(d_min, d);
    }
  }
  if (!(d_min > 0.0))
    throw NumericError("camera center lies on a grid cell center; depth weights undefined");
  for (float& v : out.v) v = static_cast<float>(d_min / v);
  return out;
}

ConfidenceMap combine_confidence(const ConfidenceMap& a, const ConfidenceMap& b) {
  if (a.h != b.h || a.w != b.w) throw ValidationError("confidence map shapes do not match");
  ConfidenceMap out = a;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
  return out;
}

}  // namespace scf::fusion
