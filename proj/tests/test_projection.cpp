#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "scfusion/errors.hpp"
#include "scfusion/geometry.hpp"
#include "scfusion/projection.hpp"
#include "scfusion/rng.hpp"

using namespace scf;

namespace {

geom::CameraModel ring_camera(double angle, double radius, double height, double focal, int w,
                              int h) {
  const Eigen::Vector3d center(radius * std::cos(angle), radius * std::sin(angle), height);
  Eigen::Vector3d fwd = (-center).normalized();
  Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ()).normalized();
  Eigen::Vector3d down = fwd.cross(right).normalized();
  Eigen::Matrix3d R;
  R.row(0) = right;
  R.row(1) = down;
  R.row(2) = fwd;
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  K(0, 0) = focal;
  K(1, 1) = focal;
  K(0, 2) = w / 2.0;
  K(1, 2) = h / 2.0;
  return geom::CameraModel::make(0, K, R, -R * center, w, h);
}

geom::CameraModel random_camera(std::mt19937_64& g, int w, int h) {
  return ring_camera(rng::uniform(g, 0.0, 6.28), rng::uniform(g, 12.0, 24.0),
                     rng::uniform(g, 5.0, 14.0), rng::uniform(g, 50.0, 110.0), w, h);
}

FeatureMap random_map(std::mt19937_64& g, int c, int h, int w) {
  FeatureMap fm = FeatureMap::zeros(c, h, w);
  for (float& v : fm.v) {
    // Zeros are common in real splat inputs; keep a third of them to make
    // the nonzero-footprint mask non-trivial.
    const double u = rng::uniform01(g);
    v = u < 0.3 ? 0.0f : static_cast<float>(rng::uniform(g, -1.0, 1.0));
  }
  return fm;
}

// Brute-force accumulate-and-divide reference: carry every feature pixel
// (the sensor point x*stride + (stride-1)/2) to the ground plane, bucket by
// cell, then divide sums by counts (or keep the running max).
struct OracleSplat {
  BevFeature feature;
  std::vector<int> counts;
};

OracleSplat oracle_splat(const FeatureMap& fm, const geom::CameraModel& cam,
                         const geom::BevGrid& grid, int stride, proj::SplatRule rule) {
  const size_t plane = static_cast<size_t>(grid.height) * grid.width;
  std::vector<double> acc(static_cast<size_t>(fm.c) * plane, 0.0);
  std::vector<int> counts(plane, 0);
  for (int y = 0; y < fm.h; ++y) {
    for (int x = 0; x < fm.w; ++x) {
      const double u = x * stride + 0.5 * (stride - 1);
      const double v = y * stride + 0.5 * (stride - 1);
      const auto gp = geom::image_to_ground(cam, Eigen::Vector2d(u, v));
      if (!gp) continue;
      const auto cell = geom::cell_of(grid, Eigen::Vector2d(gp->x(), gp->y()));
      if (!cell) continue;
      const size_t ci = static_cast<size_t>(cell->first) * grid.width + cell->second;
      const bool first = counts[ci] == 0;
      ++counts[ci];
      for (int ch = 0; ch < fm.c; ++ch) {
        const double val = fm.at(ch, y, x);
        double& slot = acc[static_cast<size_t>(ch) * plane + ci];
        if (rule == proj::SplatRule::kMean)
          slot += val;
        else if (first || val > slot)
          slot = val;
      }
    }
  }
  OracleSplat out{BevFeature::zeros(fm.c, grid.height, grid.width), std::move(counts)};
  for (size_t ci = 0; ci < plane; ++ci) {
    if (out.counts[ci] == 0) continue;
    for (int ch = 0; ch < fm.c; ++ch) {
      const double raw = acc[static_cast<size_t>(ch) * plane + ci];
      out.feature.v[static_cast<size_t>(ch) * plane + ci] =
          static_cast<float>(rule == proj::SplatRule::kMean ? raw / out.counts[ci] : raw);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("splat matches the accumulate-and-divide oracle on 100 random maps") {
  auto g = rng::substream(11, {rng::fnv1a64("spt-oracle")});
  const geom::BevGrid grid = geom::BevGrid::make(-12.0, -12.0, 0.5, 48, 48);
  for (int iter = 0; iter < 100; ++iter) {
    const geom::CameraModel cam = random_camera(g, 64, 64);
    const FeatureMap fm = random_map(g, 3, 64, 64);
    const proj::SplatResult got = proj::spt_project_detail(fm, cam, grid);
    const OracleSplat want = oracle_splat(fm, cam, grid, 1, proj::SplatRule::kMean);

    REQUIRE(got.feature.same_shape(want.feature));
    for (size_t i = 0; i < got.feature.v.size(); ++i)
      CHECK(std::abs(got.feature.v[i] - want.feature.v[i]) <= 1e-6);
    for (size_t ci = 0; ci < want.counts.size(); ++ci)
      CHECK(got.counts[ci] == want.counts[ci]);

    // Mask/feature consistency: the mask is exactly the nonzero footprint.
    for (size_t ci = 0; ci < want.counts.size(); ++ci) {
      bool any = false;
      for (int ch = 0; ch < 3; ++ch)
        any = any || got.feature.v[static_cast<size_t>(ch) * want.counts.size() + ci] != 0.0f;
      CHECK(got.mask.v[ci] == (any ? 1 : 0));
    }
  }
}

TEST_CASE("cells never hit by a pixel stay exactly zero") {
  auto g = rng::substream(12, {rng::fnv1a64("spt-zero")});
  const geom::BevGrid grid = geom::BevGrid::make(-12.0, -12.0, 0.5, 48, 48);
  const geom::CameraModel cam = random_camera(g, 64, 64);
  const FeatureMap fm = random_map(g, 3, 64, 64);
  const proj::SplatResult res = proj::spt_project_detail(fm, cam, grid);
  const size_t plane = static_cast<size_t>(grid.height) * grid.width;
  int untouched = 0;
  for (size_t ci = 0; ci < plane; ++ci) {
    if (res.counts[ci] != 0) continue;
    ++untouched;
    CHECK(res.mask.v[ci] == 0);
    for (int ch = 0; ch < fm.c; ++ch) CHECK(res.feature.v[static_cast<size_t>(ch) * plane + ci] == 0.0f);
  }
  CHECK(untouched > 0);  // a single camera cannot cover the whole grid
}

TEST_CASE("mean splat conserves the in-grid pixel sum") {
  auto g = rng::substream(13, {rng::fnv1a64("spt-conserve")});
  const geom::BevGrid grid = geom::BevGrid::make(-12.0, -12.0, 0.5, 48, 48);
  const geom::CameraModel cam = random_camera(g, 64, 64);
  const FeatureMap fm = random_map(g, 2, 64, 64);
  const proj::SplatResult res = proj::spt_project_detail(fm, cam, grid);

  const size_t plane = static_cast<size_t>(grid.height) * grid.width;
  for (int ch = 0; ch < fm.c; ++ch) {
    double recon = 0.0;
    for (size_t ci = 0; ci < plane; ++ci)
      recon += static_cast<double>(res.feature.v[static_cast<size_t>(ch) * plane + ci]) * res.counts[ci];
    double direct = 0.0;
    for (int y = 0; y < fm.h; ++y) {
      for (int x = 0; x < fm.w; ++x) {
        const auto gp = geom::image_to_ground(cam, Eigen::Vector2d(x, y));
        if (!gp) continue;
        if (!geom::cell_of(grid, Eigen::Vector2d(gp->x(), gp->y()))) continue;
        direct += fm.at(ch, y, x);
      }
    }
    CHECK(recon == doctest::Approx(direct).epsilon(1e-5));
  }
}

TEST_CASE("max splat keeps the channel-wise maximum per cell") {
  auto g = rng::substream(14, {rng::fnv1a64("spt-max")});
  const geom::BevGrid grid = geom::BevGrid::make(-12.0, -12.0, 0.5, 48, 48);
  const geom::CameraModel cam = random_camera(g, 64, 64);
  const FeatureMap fm = random_map(g, 3, 64, 64);
  const auto [feat, mask] = proj::spt_project(fm, cam, grid, 1, proj::SplatRule::kMax);
  const OracleSplat want = oracle_splat(fm, cam, grid, 1, proj::SplatRule::kMax);
  for (size_t i = 0; i < feat.v.size(); ++i) CHECK(feat.v[i] == want.feature.v[i]);
}

TEST_CASE("splat at stride 2 places feature pixels at their sensor centers") {
  auto g = rng::substream(15, {rng::fnv1a64("spt-stride")});
  const geom::BevGrid grid = geom::BevGrid::make(-12.0, -12.0, 0.5, 48, 48);
  const geom::CameraModel cam = random_camera(g, 128, 96);
  const FeatureMap fm = random_map(g, 3, 48, 64);
  const auto [feat, mask] = proj::spt_project(fm, cam, grid, 2);
  const OracleSplat want = oracle_splat(fm, cam, grid, 2, proj::SplatRule::kMean);
  for (size_t i = 0; i < feat.v.size(); ++i)
    CHECK(std::abs(feat.v[i] - want.feature.v[i]) <= 1e-6);
}

TEST_CASE("bilinear projection keeps a constant map constant on visible cells") {
  auto g = rng::substream(16, {rng::fnv1a64("bilinear-const")});
  const geom::BevGrid grid = geom::BevGrid::make(-12.0, -12.0, 0.5, 48, 48);
  const geom::CameraModel cam = random_camera(g, 64, 64);
  FeatureMap fm = FeatureMap::zeros(2, 64, 64);
  fm.v.assign(fm.v.size(), 3.25f);
  const BevFeature bev = proj::bilinear_project(fm, cam, grid);
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const Eigen::Vector2d xy = grid.world_of(row, col);
      const bool vis = geom::world_to_image(cam, Eigen::Vector3d(xy.x(), xy.y(), 0.0)).has_value();
      for (int ch = 0; ch < 2; ++ch) CHECK(bev.at(ch, row, col) == (vis ? 3.25f : 0.0f));
    }
  }
}

TEST_CASE("bilinear projection agrees with a direct interpolation oracle") {
  auto g = rng::substream(17, {rng::fnv1a64("bilinear-oracle")});
  const geom::BevGrid grid = geom::BevGrid::make(-12.0, -12.0, 0.5, 48, 48);
  const geom::CameraModel cam = random_camera(g, 64, 64);
  const FeatureMap fm = random_map(g, 2, 64, 64);
  const BevFeature bev = proj::bilinear_project(fm, cam, grid);
  for (int row = 0; row < grid.height; ++row) {
    for (int col = 0; col < grid.width; ++col) {
      const Eigen::Vector2d xy = grid.world_of(row, col);
      const auto uv = geom::world_to_image(cam, Eigen::Vector3d(xy.x(), xy.y(), 0.0));
      if (!uv) continue;
      const int x0 = static_cast<int>(std::floor(uv->x()));
      const int y0 = static_cast<int>(std::floor(uv->y()));
      const double ax = uv->x() - x0;
      const double ay = uv->y() - y0;
      const auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
      for (int ch = 0; ch < 2; ++ch) {
        const double v00 = fm.at(ch, clampi(y0, 63), clampi(x0, 63));
        const double v01 = fm.at(ch, clampi(y0, 63), clampi(x0 + 1, 63));
        const double v10 = fm.at(ch, clampi(y0 + 1, 63), clampi(x0, 63));
        const double v11 = fm.at(ch, clampi(y0 + 1, 63), clampi(x0 + 1, 63));
        const double want = (1 - ay) * ((1 - ax) * v00 + ax * v01) + ay * ((1 - ax) * v10 + ax * v11);
        CHECK(std::abs(bev.at(ch, row, col) - want) <= 1e-6);
      }
    }
  }
}

TEST_CASE("kernel discretization is normalized and symmetric") {
  for (const auto& [sigma, size] : std::vector<std::pair<double, int>>{{1.0, 5}, {0.7, 3}, {2.5, 7}}) {
    const std::vector<double> w = proj::KernelSpec::make(sigma, size).discretize();
    double sum = 0.0;
    for (double x : w) sum += x;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    // Center is the maximum; mirrored taps are equal.
    const int r = size / 2;
    const double center = w[static_cast<size_t>(r) * size + r];
    for (double x : w) CHECK(x <= center);
    CHECK(w[0] == w[static_cast<size_t>(size) * size - 1]);
  }
}

TEST_CASE("single-point confidence reproduces the independent kernel value") {
  Mask m = Mask::zeros(64, 64);
  m.at(32, 32) = 1;
  const proj::KernelSpec spec = proj::KernelSpec::make(1.0, 5);
  const ConfidenceMap conf = proj::confidence_map(m, spec);

  // Independent evaluation: the center tap of a renormalized 5x5 Gaussian.
  double sum = 0.0;
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) sum += std::exp(-(dx * dx + dy * dy) / 2.0);
  const double center = 1.0 / sum;
  CHECK(std::abs(center - 0.16210) < 1e-4);
  CHECK(conf.at(32, 32) == doctest::Approx(center).epsilon(1e-6));

  double total = 0.0;
  for (float v : conf.v) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    total += v;
  }
  // Interior point, normalized kernel: the responses tile back to one.
  CHECK(total == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("confidence saturates inside a filled region and decays at borders") {
  Mask m = Mask::zeros(32, 32);
  for (int y = 8; y < 24; ++y)
    for (int x = 8; x < 24; ++x) m.at(y, x) = 1;
  const ConfidenceMap conf = proj::confidence_map(m, proj::KernelSpec::make(1.0, 5));
  CHECK(conf.at(16, 16) == doctest::Approx(1.0).epsilon(1e-6));  // fully covered window
  CHECK(conf.at(8, 8) < 1.0f);                                   // corner of the block
  CHECK(conf.at(0, 0) == 0.0f);                                  // far outside
  for (float v : conf.v) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("projection input validation") {
  CHECK_THROWS_AS(proj::KernelSpec::make(0.0, 5), ValidationError);
  CHECK_THROWS_AS(proj::KernelSpec::make(1.0, 4), ValidationError);
  CHECK_THROWS_AS(proj::KernelSpec::make(1.0, -1), ValidationError);

  auto g = rng::substream(18, {rng::fnv1a64("proj-validate")});
  const geom::BevGrid grid = geom::BevGrid::make(-12.0, -12.0, 0.5, 48, 48);
  const geom::CameraModel cam = random_camera(g, 64, 64);
  const FeatureMap wrong = FeatureMap::zeros(2, 32, 64);  // height mismatch
  CHECK_THROWS_AS(proj::bilinear_project(wrong, cam, grid), ValidationError);
  CHECK_THROWS_AS(proj::spt_project(wrong, cam, grid), ValidationError);
  const FeatureMap ok = FeatureMap::zeros(2, 64, 64);
  CHECK_THROWS_AS(proj::spt_project(ok, cam, grid, 0), ValidationError);
}
