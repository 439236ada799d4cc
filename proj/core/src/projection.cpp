#include "scfusion/projection.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "scfusion/errors.hpp"

namespace scf::proj {

KernelSpec KernelSpec::make(double sigma, int size) {
  if (!(sigma > 0.0)) throw ValidationError("kernel sigma must be positive");
  if (size < 1 || size % 2 == 0) throw ValidationError("kernel size must be odd and >= 1");
  return KernelSpec{sigma, size};
}

std::vector<double> KernelSpec::discretize() const {
  const int r = size / 2;
  std::vector<double> w(static_cast<size_t>(size) * size);
  double sum = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      const double g = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
      w[static_cast<size_t>(dy + r) * size + (dx + r)] = g;
      sum += g;
    }
  }
  for (double& x : w) x /= sum;
  return w;
}

namespace {

// Feature maps at stride s sample the sensor at u = x*s + (s-1)/2; these
// two helpers convert between the full-resolution pixel frame and the
// feature-map frame.
inline double to_feature_coord(double u, int stride) {
  return (u - 0.5 * (stride - 1)) / stride;
}

inline double to_pixel_coord(int x, int stride) {
  return static_cast<double>(x) * stride + 0.5 * (stride - 1);
}

void check_stride(const FeatureMap& fm, const CameraModel& cam, int stride) {
  if (stride < 1) throw ValidationError("stride must be >= 1");
  if (fm.w * stride != cam.image_w || fm.h * stride != cam.image_h)
    throw ValidationError("feature map dimensions do not match image size / stride");
}

}  // namespace

BevFeature bilinear_project(const FeatureMap& fm, const CameraModel& cam, const BevGrid& grid,
                            int stride) {
  check_stride(fm, cam, stride);
  BevFeature out = BevFeature::zeros(fm.c, grid.height, grid.width);
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const Eigen::Vector2d xy = grid.world_of(row, col);
      const auto uv = geom::world_to_image(cam, Eigen::Vector3d(xy.x(), xy.y(), 0.0));
      if (!uv) continue;
      const double uf = to_feature_coord(uv->x(), stride);
      const double vf = to_feature_coord(uv->y(), stride);
      // Border-clamped bilinear sample, so a constant map stays constant
      // across every visible cell.
      const int x0 = static_cast<int>(std::floor(uf));
      const int y0 = static_cast<int>(std::floor(vf));
      const double ax = uf - x0;
      const double ay = vf - y0;
      const int cx0 = std::clamp(x0, 0, fm.w - 1);
      const int cx1 = std::clamp(x0 + 1, 0, fm.w - 1);
      const int cy0 = std::clamp(y0, 0, fm.h - 1);
      const int cy1 = std::clamp(y0 + 1, 0, fm.h - 1);
      for (int ch = 0; ch < fm.c; ++ch) {
        const double v00 = fm.at(ch, cy0, cx0);
        const double v01 = fm.at(ch, cy0, cx1);
        const double v10 = fm.at(ch, cy1, cx0);
        const double v11 = fm.at(ch, cy1, cx1);
        const double top = v00 + ax * (v01 - v00);
        const double bot = v10 + ax * (v11 - v10);
        out.at(ch, row, col) = static_cast<float>(top + ay * (bot - top));
      }
    }
  }
  return out;
}

SplatResult spt_project_detail(const FeatureMap& fm, const CameraModel& cam, const BevGrid& grid,
                               int stride, SplatRule rule) {
  check_stride(fm, cam, stride);
  SplatResult res{BevFeature::zeros(fm.c, grid.height, grid.width), Mask::zeros(grid.height, grid.width),
                  std::vector<int32_t>(static_cast<size_t>(grid.height) * grid.width, 0)};

  // Most cells never receive a pixel, so contributions accumulate in a
  // hash-indexed store keyed by flat cell index and only touched cells are
  // materialized at the end. Mean sums are kept in double.
  struct Acc {
    int32_t count = 0;
    std::vector<double> per_channel;
  };
  std::unordered_map<int32_t, Acc> hits;
  hits.reserve(1024);

  for (int y = 0; y < fm.h; ++y) {
    for (int x = 0; x < fm.w; ++x) {
      const double u = to_pixel_coord(x, stride);
      const double v = to_pixel_coord(y, stride);
      const auto gp = geom::image_to_ground(cam, Eigen::Vector2d(u, v));
      if (!gp) continue;
      const auto cell = geom::cell_of(grid, Eigen::Vector2d(gp->x(), gp->y()));
      if (!cell) continue;
      const int32_t ci = static_cast<int32_t>(cell->first) * grid.width + cell->second;
      Acc& acc = hits[ci];
      const bool first = acc.count == 0;
      if (first) acc.per_channel.assign(static_cast<size_t>(fm.c), 0.0);
      ++acc.count;
      for (int ch = 0; ch < fm.c; ++ch) {
        const float val = fm.at(ch, y, x);
        if (rule == SplatRule::kMean)
          acc.per_channel[static_cast<size_t>(ch)] += val;
        else if (first || val > acc.per_channel[static_cast<size_t>(ch)])
          acc.per_channel[static_cast<size_t>(ch)] = val;
      }
    }
  }

  const size_t plane = static_cast<size_t>(grid.height) * grid.width;
  for (const auto& [ci, acc] : hits) {
    res.counts[static_cast<size_t>(ci)] = acc.count;
    for (int ch = 0; ch < fm.c; ++ch) {
      const double raw = acc.per_channel[static_cast<size_t>(ch)];
      res.feature.v[static_cast<size_t>(ch) * plane + ci] =
          static_cast<float>(rule == SplatRule::kMean ? raw / acc.count : raw);
    }
  }
  res.mask = make_mask(res.feature);
  return res;
}

std::pair<BevFeature, Mask> spt_project(const FeatureMap& fm, const CameraModel& cam,
                                        const BevGrid& grid, int stride, SplatRule rule) {
  SplatResult res = spt_project_detail(fm, cam, grid, stride, rule);
  return {std::move(res.feature), std::move(res.mask)};
}

Mask make_mask(const BevFeature& bf) {
  Mask m = Mask::zeros(bf.h, bf.w);
  const size_t plane = static_cast<size_t>(bf.h) * bf.w;
  for (size_t ci = 0; ci < plane; ++ci) {
    for (int ch = 0; ch < bf.c; ++ch) {
      if (bf.v[static_cast<size_t>(ch) * plane + ci] != 0.0f) {
        m.v[ci] = 1;
        break;
      }
    }
  }
  return m;
}

ConfidenceMap confidence_map(const Mask& m, const KernelSpec& k) {
  const std::vector<double> w = k.discretize();
  const int r = k.size / 2;
  ConfidenceMap out = ConfidenceMap::zeros(m.h, m.w);
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) {
      double acc = 0.0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= m.h) continue;
        for (int dx = -r; dx <= r; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= m.w) continue;
          if (m.v[static_cast<size_t>(yy) * m.w + xx])
            acc += w[static_cast<size_t>(dy + r) * k.size + (dx + r)];
        }
      }
      out.v[static_cast<size_t>(y) * m.w + x] = static_cast<float>(acc);
    }
  }
  return out;
}

}  // namespace scf::proj
