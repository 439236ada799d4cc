#include "scfusion/simulator.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "scfusion/errors.hpp"
#include "scfusion/rng.hpp"

namespace scf::sim {

void SceneConfig::validate() const {
  if (n_cameras < 1) throw ValidationError("n_cameras must be >= 1");
  if (!(ring_radius > 0.0)) throw ValidationError("ring_radius must be positive");
  if (!(ring_height > 0.0)) throw ValidationError("ring_height must be positive");
  if (!(focal > 0.0)) throw ValidationError("focal must be positive");
  if (image_w < 1 || image_h < 1) throw ValidationError("image_w and image_h must be positive");
  geom::BevGrid::make(grid.origin_x, grid.origin_y, grid.cell_size, grid.width, grid.height);
  if (n_walkers < 0) throw ValidationError("n_walkers must be non-negative");
  if (!(speed_min > 0.0) || !(speed_max >= speed_min))
    throw ValidationError("walker speeds need 0 < speed_min <= speed_max");
  if (!(fps > 0.0)) throw ValidationError("fps must be positive");
  if (n_frames < 1) throw ValidationError("n_frames must be >= 1");
  for (const Occluder& o : occluders)
    if (!(o.radius > 0.0)) throw ValidationError("occluder radius must be positive");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be non-negative");
  if (channels < 2) throw ValidationError("channels must be >= 2 (bias plus signature)");
  if (!(bump_radius > 0.0)) throw ValidationError("bump_radius must be positive");
}

namespace {

geom::CameraModel ring_camera(const SceneConfig& cfg, int s) {
  const double ang = 2.0 * std::numbers::pi * s / cfg.n_cameras;
  const Eigen::Vector3d pos(cfg.ring_radius * std::cos(ang), cfg.ring_radius * std::sin(ang),
                            cfg.ring_height);
  const Eigen::Vector3d target(cfg.grid.origin_x + 0.5 * cfg.grid.extent_x(),
                               cfg.grid.origin_y + 0.5 * cfg.grid.extent_y(), 0.0);
  const Eigen::Vector3d forward = (target - pos).normalized();
  const Eigen::Vector3d up(0.0, 0.0, 1.0);
  const Eigen::Vector3d right = forward.cross(up).normalized();
  const Eigen::Vector3d down = forward.cross(right);  // image v grows downward

  Eigen::Matrix3d rot;
  rot.row(0) = right;
  rot.row(1) = down;
  rot.row(2) = forward;
  Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
  k(0, 0) = cfg.focal;
  k(1, 1) = cfg.focal;
  k(0, 2) = 0.5 * (cfg.image_w - 1);
  k(1, 2) = 0.5 * (cfg.image_h - 1);
  return geom::CameraModel::make(s, k, rot, -rot * pos, cfg.image_w, cfg.image_h);
}

double segment_distance(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                        const Eigen::Vector2d& c) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0.0 ? std::clamp((c - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (c - (a + t * ab)).norm();
}

}  // namespace

bool segment_clear(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                   const std::vector<Occluder>& occluders) {
  for (const Occluder& o : occluders)
    if (segment_distance(a, b, Eigen::Vector2d(o.x, o.y)) <= o.radius) return false;
  return true;
}

Scene gen_scene(const SceneConfig& cfg) {
  cfg.validate();
  Scene scene;
  scene.cfg = cfg;

  for (int s = 0; s < cfg.n_cameras; ++s) {
    const geom::CameraModel cam = ring_camera(cfg, s);
    // Every camera must see some part of the grid, otherwise the ring
    // geometry is useless for this scene.
    const double ex = cfg.grid.extent_x();
    const double ey = cfg.grid.extent_y();
    const Eigen::Vector2d probes[5] = {
        {cfg.grid.origin_x + 0.5 * ex, cfg.grid.origin_y + 0.5 * ey},
        {cfg.grid.origin_x, cfg.grid.origin_y},
        {cfg.grid.origin_x + ex, cfg.grid.origin_y},
        {cfg.grid.origin_x, cfg.grid.origin_y + ey},
        {cfg.grid.origin_x + ex, cfg.grid.origin_y + ey}};
    bool sees = false;
    for (const Eigen::Vector2d& p : probes)
      if (geom::world_to_image(cam, Eigen::Vector3d(p.x(), p.y(), 0.0))) sees = true;
    if (!sees)
      throw ValidationError("camera ring views no part of the grid; adjust ring_radius or focal");
    scene.cameras.push_back(cam);
  }

  const double dt = 1.0 / cfg.fps;
  const double ex = cfg.grid.extent_x();
  const double ey = cfg.grid.extent_y();
  // Walkers bounce off a wall slightly inset from the grid border so their
  // positions always quantize to an in-grid cell.
  const double wall = std::min(0.5, 0.1 * std::min(ex, ey));
  const double lo_x = cfg.grid.origin_x + wall, hi_x = cfg.grid.origin_x + ex - wall;
  const double lo_y = cfg.grid.origin_y + wall, hi_y = cfg.grid.origin_y + ey - wall;

  for (int i = 0; i < cfg.n_walkers; ++i) {
    auto g = rng::substream(cfg.seed, {rng::fnv1a64("walker"), static_cast<uint64_t>(i)});
    Walker w;
    double x = rng::uniform(g, lo_x, hi_x);
    double y = rng::uniform(g, lo_y, hi_y);
    const double ang = rng::uniform(g, 0.0, 2.0 * std::numbers::pi);
    const double speed = rng::uniform(g, cfg.speed_min, cfg.speed_max);
    double vx = speed * std::cos(ang) * dt;
    double vy = speed * std::sin(ang) * dt;
    w.signature.reserve(cfg.channels - 1);
    for (int c = 1; c < cfg.channels; ++c) w.signature.push_back(rng::uniform(g, 0.3, 1.0));

    w.traj.reserve(cfg.n_frames);
    w.traj.emplace_back(x, y);
    for (int f = 1; f < cfg.n_frames; ++f) {
      x += vx;
      y += vy;
      while (x < lo_x || x > hi_x) {
        x = x < lo_x ? 2.0 * lo_x - x : 2.0 * hi_x - x;
        vx = -vx;
      }
      while (y < lo_y || y > hi_y) {
        y = y < lo_y ? 2.0 * lo_y - y : 2.0 * hi_y - y;
        vy = -vy;
      }
      w.traj.emplace_back(x, y);
    }
    scene.walkers.push_back(std::move(w));
  }

  scene.visibility.assign(
      static_cast<size_t>(cfg.n_frames) * cfg.n_walkers * cfg.n_cameras, 0);
  for (int f = 0; f < cfg.n_frames; ++f) {
    for (int wi = 0; wi < cfg.n_walkers; ++wi) {
      const Eigen::Vector2d foot = scene.walkers[wi].traj[f];
      for (int s = 0; s < cfg.n_cameras; ++s) {
        const geom::CameraModel& cam = scene.cameras[s];
        const bool in_view =
            geom::world_to_image(cam, Eigen::Vector3d(foot.x(), foot.y(), 0.0)).has_value();
        const Eigen::Vector3d c = cam.center();
        const bool clear = segment_clear(Eigen::Vector2d(c.x(), c.y()), foot, cfg.occluders);
        scene.visibility[(static_cast<size_t>(f) * cfg.n_walkers + wi) * cfg.n_cameras + s] =
            in_view && clear ? 1 : 0;
      }
    }
  }
  return scene;
}

RenderedView render_features(const Scene& scene, int frame, int camera_id) {
  const SceneConfig& cfg = scene.cfg;
  if (frame < 0 || frame >= cfg.n_frames) throw ValidationError("frame out of range");
  if (camera_id < 0 || camera_id >= cfg.n_cameras) throw ValidationError("unknown camera id");

  RenderedView view{camera_id, frame, Tensor3f::zeros(cfg.channels, cfg.image_h, cfg.image_w)};
  const geom::CameraModel& cam = scene.cameras[camera_id];
  const double ref_dist = std::hypot(cfg.ring_radius, cfg.ring_height);

  for (size_t wi = 0; wi < scene.walkers.size(); ++wi) {
    if (!scene.visible(frame, static_cast<int>(wi), camera_id)) continue;
    const Walker& w = scene.walkers[wi];
    const Eigen::Vector3d foot(w.traj[frame].x(), w.traj[frame].y(), 0.0);
    const auto uv = geom::world_to_image(cam, foot);
    if (!uv) continue;
    const int cu = static_cast<int>(std::lround(uv->x()));
    const int cv = static_cast<int>(std::lround(uv->y()));
    const double dist = (cam.center() - foot).norm();
    const double r = cfg.bump_radius * ref_dist / dist;
    const double sigma = 0.5 * r;
    const int reach = static_cast<int>(std::ceil(r));
    for (int dy = -reach; dy <= reach; ++dy) {
      const int py = cv + dy;
      if (py < 0 || py >= cfg.image_h) continue;
      for (int dx = -reach; dx <= reach; ++dx) {
        const int px = cu + dx;
        if (px < 0 || px >= cfg.image_w) continue;
        const double d2 = static_cast<double>(dx * dx + dy * dy);
        if (d2 > r * r) continue;
        view.fm.at(0, py, px) = 1.0f;  // binary footprint, shared by all walkers
        const double gval = std::exp(-d2 / (2.0 * sigma * sigma));
        for (int c = 1; c < cfg.channels; ++c)
          view.fm.at(c, py, px) += static_cast<float>(w.signature[c - 1] * gval);
      }
    }
  }

  if (cfg.noise_sigma > 0.0) {
    auto g = rng::substream(cfg.seed, {rng::fnv1a64("render"), static_cast<uint64_t>(frame),
                                       static_cast<uint64_t>(camera_id)});
    for (int y = 0; y < cfg.image_h; ++y)
      for (int x = 0; x < cfg.image_w; ++x) {
        if (view.fm.at(0, y, x) == 0.0f) continue;
        for (int c = 1; c < cfg.channels; ++c)
          view.fm.at(c, y, x) += static_cast<float>(cfg.noise_sigma * rng::gaussian(g));
      }
  }
  return view;
}

GroundTruth export_ground_truth(const Scene& scene) {
  const SceneConfig& cfg = scene.cfg;
  GroundTruth gt;
  gt.heatmaps.reserve(cfg.n_frames);
  for (int f = 0; f < cfg.n_frames; ++f) {
    head::GtHeatmap hm = head::GtHeatmap::zeros(cfg.grid.height, cfg.grid.width);
    for (size_t wi = 0; wi < scene.walkers.size(); ++wi) {
      const Eigen::Vector2d pos = scene.walkers[wi].traj[f];
      gt.points.push_back(metrics::TrackPoint{f, static_cast<int>(wi), pos.x(), pos.y()});
      const auto cell = geom::cell_of(cfg.grid, pos);
      if (cell) hm.at(cell->first, cell->second) = 1;
    }
    gt.heatmaps.push_back(std::move(hm));
  }
  return gt;
}

}  // namespace scf::sim
