#include "scfusion/geometry.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>

#include "scfusion/errors.hpp"

namespace scf::geom {

CameraModel CameraModel::make(int id, const Eigen::Matrix3d& K, const Eigen::Matrix3d& R,
                              const Eigen::Vector3d& t, int image_w, int image_h) {
  const Eigen::Matrix3d ortho_residual = R * R.transpose() - Eigen::Matrix3d::Identity();
  if (ortho_residual.cwiseAbs().maxCoeff() >= 1e-9)
    throw ValidationError("CameraModel: R is not orthonormal");
  if (R.determinant() < 0.0)
    throw ValidationError("CameraModel: R has negative determinant");
  if (std::abs(K(1, 0)) > 0.0 || std::abs(K(2, 0)) > 0.0 || std::abs(K(2, 1)) > 0.0)
    throw ValidationError("CameraModel: K must be upper-triangular");
  if (!(K(0, 0) > 0.0) || !(K(1, 1) > 0.0))
    throw ValidationError("CameraModel: K focal lengths must be positive");
  if (K(2, 2) != 1.0)
    throw ValidationError("CameraModel: K(2,2) must be 1");
  if (image_w <= 0 || image_h <= 0)
    throw ValidationError("CameraModel: image dims must be positive");
  CameraModel c;
  c.id = id;
  c.K = K;
  c.R = R;
  c.t = t;
  c.image_w = image_w;
  c.image_h = image_h;
  return c;
}

BevGrid BevGrid::make(double origin_x, double origin_y, double cell_size, int width, int height) {
  if (!(cell_size > 0.0)) throw ValidationError("BevGrid: cell_size must be positive");
  if (width <= 0 || height <= 0) throw ValidationError("BevGrid: dims must be positive");
  BevGrid g;
  g.origin_x = origin_x;
  g.origin_y = origin_y;
  g.cell_size = cell_size;
  g.width = width;
  g.height = height;
  return g;
}

std::optional<Eigen::Vector3d> project_unbounded(const CameraModel& cam, const Eigen::Vector3d& p_world) {
  const Eigen::Vector3d p_cam = cam.R * p_world + cam.t;
  if (!(p_cam.z() > 0.0)) return std::nullopt;
  const Eigen::Vector3d uvw = cam.K * p_cam;
  return Eigen::Vector3d(uvw.x() / uvw.z(), uvw.y() / uvw.z(), p_cam.z());
}

std::optional<Eigen::Vector2d> world_to_image(const CameraModel& cam, const Eigen::Vector3d& p_world) {
  const auto pr = project_unbounded(cam, p_world);
  if (!pr) return std::nullopt;
  const double u = pr->x();
  const double v = pr->y();
  if (u < 0.0 || u >= cam.image_w || v < 0.0 || v >= cam.image_h) return std::nullopt;
  return Eigen::Vector2d(u, v);
}

std::optional<Eigen::Vector3d> image_to_ground(const CameraModel& cam, const Eigen::Vector2d& pixel) {
  const Eigen::Vector3d center = cam.center();
  const Eigen::Vector3d dir =
      cam.R.transpose() * (cam.K.inverse() * Eigen::Vector3d(pixel.x(), pixel.y(), 1.0));
  // Ray: p(s) = center + s * dir, intersect z = 0.
  if (std::abs(dir.z()) < 1e-15) return std::nullopt;
  const double s = -center.z() / dir.z();
  if (s <= 0.0) return std::nullopt;
  Eigen::Vector3d g = center + s * dir;
  g.z() = 0.0;
  return g;
}

Eigen::Matrix3d ground_homography(const CameraModel& cam, const BevGrid& grid) {
  // World ground plane (x, y, 1) -> homogeneous pixel.
  Eigen::Matrix3d world_to_pix;
  world_to_pix.col(0) = cam.R.col(0);
  world_to_pix.col(1) = cam.R.col(1);
  world_to_pix.col(2) = cam.t;
  world_to_pix = cam.K * world_to_pix;

  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(world_to_pix);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(2);
  if (!(smin > 0.0) || smax / smin > 1e12)
    throw NumericError("ground_homography: singular camera/plane configuration");

  Eigen::Matrix3d grid_from_world = Eigen::Matrix3d::Identity();
  grid_from_world(0, 0) = 1.0 / grid.cell_size;
  grid_from_world(1, 1) = 1.0 / grid.cell_size;
  grid_from_world(0, 2) = -grid.origin_x / grid.cell_size;
  grid_from_world(1, 2) = -grid.origin_y / grid.cell_size;

  Eigen::Matrix3d h = grid_from_world * world_to_pix.inverse();
  // Canonical scale: largest-magnitude entry positive, Frobenius norm 1.
  double big = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      if (std::abs(h(r, c)) > std::abs(big)) big = h(r, c);
  h /= big;
  h /= h.norm();
  return h;
}

std::optional<std::pair<int, int>> cell_of(const BevGrid& grid, const Eigen::Vector2d& world_xy) {
  const double gx = (world_xy.x() - grid.origin_x) / grid.cell_size;
  const double gy = (world_xy.y() - grid.origin_y) / grid.cell_size;
  const int col = static_cast<int>(std::floor(gx));
  const int row = static_cast<int>(std::floor(gy));
  if (col < 0 || col >= grid.width || row < 0 || row >= grid.height) return std::nullopt;
  return std::make_pair(row, col);
}

}  // namespace scf::geom
