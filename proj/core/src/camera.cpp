#include "partstyle/camera.hpp"

#include "partstyle/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace partstyle {

Vec3 Camera::eye() const {
  const double ce = std::cos(elevation);
  return distance * Vec3(ce * std::sin(azimuth), std::sin(elevation), ce * std::cos(azimuth));
}

Mat3 Camera::rotation() const {
  const Vec3 back = eye().normalized();  // camera +z points away from the target
  const Vec3 right = Vec3::UnitY().cross(back).normalized();
  const Vec3 up = back.cross(right);
  Mat3 r;
  r.row(0) = right.transpose();
  r.row(1) = up.transpose();
  r.row(2) = back.transpose();
  return r;
}

double Camera::focal() const { return 1.0 / std::tan(0.5 * fov); }

Camera make_camera(double azimuth, double elevation, double distance, double fov, int image_size) {
  if (!(distance > 1.0)) throw InputError(fmt::format("camera distance {} must exceed the mesh radius 1", distance));
  if (!(std::abs(elevation) < kPi / 2.0) || std::abs(elevation) > kMaxElevation) {
    throw InputError(fmt::format("camera elevation {} must lie in (-pi/2, pi/2)", elevation));
  }
  if (!(fov > 0.0 && fov < kPi)) throw InputError(fmt::format("camera fov {} must lie in (0, pi)", fov));
  if (image_size < 1) throw InputError("image size must be positive");
  Camera cam;
  cam.azimuth = azimuth;
  cam.elevation = elevation;
  cam.distance = distance;
  cam.fov = fov;
  cam.image_size = image_size;
  return cam;
}

std::vector<Camera> uniform_viewpoints(int n_azimuth, std::span<const double> elevations, double distance,
                                       double fov, int image_size) {
  if (n_azimuth < 1) throw InputError("n_azimuth must be >= 1");
  std::vector<Camera> cams;
  cams.reserve(static_cast<std::size_t>(n_azimuth) * elevations.size());
  for (double el : elevations) {
    for (int a = 0; a < n_azimuth; ++a) {
      cams.push_back(make_camera(2.0 * kPi * a / n_azimuth, el, distance, fov, image_size));
    }
  }
  return cams;
}

std::vector<Camera> sample_training_views(const Camera& anchor, double sigma, int count, Rng& rng) {
  std::vector<Camera> views{anchor};
  for (int i = 0; i < count; ++i) {
    Camera c = anchor;
    const double da = rng.normal();
    const double de = rng.normal();
    c.azimuth = anchor.azimuth + sigma * da;
    c.elevation = std::clamp(anchor.elevation + sigma * de, -kMaxElevation, kMaxElevation);
    views.push_back(c);
  }
  return views;
}

}  // namespace partstyle
