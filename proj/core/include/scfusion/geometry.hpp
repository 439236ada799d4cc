#pragma once

#include <Eigen/Core>
#include <optional>
#include <utility>

namespace scf::geom {

// Calibrated pinhole camera. Convention: p_camera = R * p_world + t, with
// image u along sensor width and v along height. Ground plane is z = 0 in
// the world frame; all BEV reasoning happens on it.
struct CameraModel {
  int id = 0;
  Eigen::Matrix3d K = Eigen::Matrix3d::Identity();
  Eigen::Matrix3d R = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();
  int image_w = 0;
  int image_h = 0;

  // Validates and constructs: R orthonormal with det +1 (inf-norm residual
  // < 1e-9), K upper-triangular with positive focal lengths and K(2,2)=1,
  // positive sensor dims.
  static CameraModel make(int id, const Eigen::Matrix3d& K, const Eigen::Matrix3d& R,
                          const Eigen::Vector3d& t, int image_w, int image_h);

  // Optical center in world coordinates, -R^T t.
  Eigen::Vector3d center() const { return -R.transpose() * t; }
};

// Axis-aligned BEV grid over the ground plane. Cell (row, col) covers
// x in [origin_x + col*cell, +cell), y in [origin_y + row*cell, +cell);
// rows run along y, cols along x.
struct BevGrid {
  double origin_x = 0.0;
  double origin_y = 0.0;
  double cell_size = 1.0;
  int width = 0;   // columns
  int height = 0;  // rows

  static BevGrid make(double origin_x, double origin_y, double cell_size, int width, int height);

  Eigen::Vector2d world_of(int row, int col) const {
    return {origin_x + (col + 0.5) * cell_size, origin_y + (row + 0.5) * cell_size};
  }
  double extent_x() const { return width * cell_size; }
  double extent_y() const { return height * cell_size; }
};

// Perspective projection of a world point. Absent when the point is behind
// the camera (depth <= 0) or lands outside [0,image_w) x [0,image_h).
std::optional<Eigen::Vector2d> world_to_image(const CameraModel& cam, const Eigen::Vector3d& p_world);

// Like world_to_image but without the image-bounds test; .z() carries the
// camera-frame depth. Used by projection code that clips separately.
std::optional<Eigen::Vector3d> project_unbounded(const CameraModel& cam, const Eigen::Vector3d& p_world);

// Back-projects a pixel and intersects the ray with z=0. Absent when the
// ray is parallel to the plane or points away from it.
std::optional<Eigen::Vector3d> image_to_ground(const CameraModel& cam, const Eigen::Vector2d& pixel);

// 3x3 homography taking homogeneous image pixels to continuous BEV cell
// coordinates (gx, gy) where gx = (x - origin_x)/cell_size runs along
// columns and gy along rows. Throws NumericError when the configuration is
// singular (condition number > 1e12).
Eigen::Matrix3d ground_homography(const CameraModel& cam, const BevGrid& grid);

// Floor quantization of a ground point into (row, col); absent outside the
// grid extent.
std::optional<std::pair<int, int>> cell_of(const BevGrid& grid, const Eigen::Vector2d& world_xy);

}  // namespace scf::geom
