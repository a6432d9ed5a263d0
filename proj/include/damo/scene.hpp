#pragma once

#include <cstdint>
#include <vector>

#include "damo/geometry.hpp"
#include "damo/tensor.hpp"

namespace damo {

// Positive-depth image plus a {0,1} validity mask.
struct DepthMap {
    Tensor2 depth;  // meters, Euclidean ray length
    Tensor2 mask;
};

struct Sphere {
    Vec3 center{0.0, 0.0, 0.0};
    double radius = 0.0;
    Vec3 albedo{0.5, 0.5, 0.5};
};

// Axis-aligned room around the origin with a handful of floating spheres.
// The camera sits at the origin, strictly inside everything.
struct Scene {
    Vec3 half_extents{2.0, 2.0, 2.0};
    std::vector<Sphere> spheres;
    Vec3 wall_albedos[6];  // -x, +x, -y, +y, -z, +z
    Vec3 light_dir{0.0, 1.0, 0.0};  // unit vector toward the light
    std::uint64_t seed = 0;
};

// Room half-extents in [2, 5] m per axis, 1-4 spheres of radius [0.2, 0.8] m
// whose surfaces stay at least 0.5 m from the camera. Deterministic per seed.
Scene random_scene(std::uint64_t seed);

struct RenderResult {
    Tensor4 rgb;  // (1, 3, h, w), linear values in [0, 1]
    DepthMap depth;
};

// Equirectangular ray cast: one ray per pixel center, nearest hit among the
// spheres and the room walls, Lambert shading floored at 0.1.
RenderResult render(const Scene& scene, int height, int width);

// Exposed for direct geometric tests.
double ray_box_exit(const Vec3& dir, const Vec3& half_extents, int* hit_axis);
bool ray_sphere_hit(const Vec3& dir, const Sphere& s, double* t_hit);

}  // namespace damo
