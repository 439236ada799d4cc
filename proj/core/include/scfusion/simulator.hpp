#pragma once

#include <cstdint>
#include <vector>

#include "scfusion/geometry.hpp"
#include "scfusion/head.hpp"
#include "scfusion/metrics.hpp"
#include "scfusion/tensor.hpp"

namespace scf::sim {

struct Occluder {
  double x = 0.0;
  double y = 0.0;
  double radius = 0.0;
};

// Desk-scale synthetic multi-camera world: cameras on a ring around a
// square ground grid, walkers bouncing inside it, optional occluder discs
// between them. Every stochastic choice derives from `seed`.
struct SceneConfig {
  int n_cameras = 4;
  double ring_radius = 18.0;  // meters from grid center
  // Elevated cameras keep the ground-plane footprint of one image pixel
  // small (it grows as distance^2 / (focal * height)), so a walker's bump
  // stays localized to a few BEV cells even at the far side of the grid.
  double ring_height = 12.0;
  double focal = 80.0;  // pixels
  int image_w = 160;
  int image_h = 120;
  geom::BevGrid grid = geom::BevGrid{-15.0, -15.0, 0.25, 120, 120};
  int n_walkers = 10;
  double speed_min = 0.5;  // m/s
  double speed_max = 1.5;
  double fps = 2.0;
  int n_frames = 60;
  std::vector<Occluder> occluders;
  double noise_sigma = 0.05;
  int channels = 8;          // 1 binary bias channel + identity signature
  double bump_radius = 3.0;  // pixels, at the nominal ring distance
  uint64_t seed = 7;

  void validate() const;
};

struct Walker {
  std::vector<double> signature;      // per-channel identity, channels-1 long
  std::vector<Eigen::Vector2d> traj;  // one world position per frame
};

struct Scene {
  SceneConfig cfg;
  std::vector<geom::CameraModel> cameras;
  std::vector<Walker> walkers;
  // visibility[(frame * n_walkers + walker) * n_cameras + camera]
  std::vector<char> visibility;

  bool visible(int frame, int walker, int camera) const {
    return visibility[(static_cast<size_t>(frame) * walkers.size() + walker) * cameras.size() +
                      camera] != 0;
  }
};

struct RenderedView {
  int camera = 0;
  int frame = 0;
  FeatureMap fm;
};

struct GroundTruth {
  std::vector<metrics::TrackPoint> points;  // frame, walker id, world position
  std::vector<head::GtHeatmap> heatmaps;    // one per frame
};

// Cameras uniformly on the ring aimed at the grid center; walkers start at
// seeded positions and reflect off the grid border; a walker is visible to
// a camera when its foot projects into the image and no occluder disc cuts
// the ground segment between them.
Scene gen_scene(const SceneConfig& cfg);

// Feature surrogate for one (frame, camera): each visible walker paints an
// isotropic Gaussian bump of its signature at its projected foot pixel,
// with radius shrinking with camera distance; the bias channel is 1 on the
// painted footprint; seeded noise perturbs signature channels on occupied
// pixels only.
RenderedView render_features(const Scene& scene, int frame, int camera_id);

// True walker positions per frame plus the binary occupancy heatmaps.
GroundTruth export_ground_truth(const Scene& scene);

// True when no occluder disc intersects the 2D segment from a to b.
bool segment_clear(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                   const std::vector<Occluder>& occluders);

}  // namespace scf::sim
