#pragma once

#include "partstyle/common.hpp"

#include <span>
#include <vector>

namespace partstyle {

class Rng;

/// Orbit camera looking at the origin with +y up (right-handed, looking
/// down -z in camera space). azimuth 0 / elevation 0 sits on +z.
struct Camera {
  double azimuth = 0.0;
  double elevation = 0.0;
  double distance = 2.5;
  double fov = kPi / 3.0;  // vertical, radians
  int image_size = 512;
  double near_plane = 0.05;
  double far_plane = 100.0;

  [[nodiscard]] Vec3 eye() const;
  /// World → camera rotation (rows are the camera axes).
  [[nodiscard]] Mat3 rotation() const;
  [[nodiscard]] Vec3 to_camera(const Vec3& world) const { return rotation() * (world - eye()); }
  /// Focal length in NDC units, 1 / tan(fov / 2).
  [[nodiscard]] double focal() const;

  bool operator==(const Camera&) const = default;
};

/// Largest |elevation| accepted; keeps the +y up-vector well defined.
inline constexpr double kMaxElevation = kPi / 2.0 - 1e-3;

/// Throws InputError when distance <= 1 (inside the unit mesh), elevation is
/// outside (-π/2, π/2), fov is outside (0, π), or image_size < 1.
Camera make_camera(double azimuth, double elevation, double distance, double fov, int image_size);

/// n_azimuth evenly spaced azimuths starting at 0 for every elevation,
/// elevation-major.
std::vector<Camera> uniform_viewpoints(int n_azimuth, std::span<const double> elevations, double distance,
                                       double fov, int image_size);

/// [anchor] followed by `count` cameras with azimuth/elevation drawn from
/// N(anchor, sigma²); elevations are clamped to the valid range.
std::vector<Camera> sample_training_views(const Camera& anchor, double sigma, int count, Rng& rng);

}  // namespace partstyle
