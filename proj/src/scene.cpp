#include "damo/scene.hpp"

#include <cmath>
#include <limits>

#include "damo/rng.hpp"

namespace damo {

namespace {

double dot(const Vec3& a, const Vec3& b) {
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

Vec3 normalized(const Vec3& a) {
    const double n = norm(a);
    return {a[0] / n, a[1] / n, a[2] / n};
}

}  // namespace

double ray_box_exit(const Vec3& dir, const Vec3& half_extents, int* hit_axis) {
    double best = std::numeric_limits<double>::infinity();
    int axis = 0;
    for (int k = 0; k < 3; ++k) {
        const double d = std::abs(dir[k]);
        if (d == 0.0) continue;
        const double t = half_extents[std::size_t(k)] / d;
        if (t < best) {
            best = t;
            axis = k;
        }
    }
    if (hit_axis) *hit_axis = axis;
    return best;
}

bool ray_sphere_hit(const Vec3& dir, const Sphere& s, double* t_hit) {
    // Ray from the origin: t^2 - 2 t (d.c) + |c|^2 - r^2 = 0.
    const double b = dot(dir, s.center);
    const double c = dot(s.center, s.center) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0.0) return false;
    const double sq = std::sqrt(disc);
    double t = b - sq;
    if (t <= 1e-9) t = b + sq;
    if (t <= 1e-9) return false;
    *t_hit = t;
    return true;
}

Scene random_scene(std::uint64_t seed) {
    Rng rng(seed);
    Scene scene;
    scene.seed = seed;
    for (int k = 0; k < 3; ++k) {
        scene.half_extents[std::size_t(k)] = rng.uniform(2.0, 5.0);
    }
    for (int f = 0; f < 6; ++f) {
        scene.wall_albedos[f] = {rng.uniform(0.3, 0.9), rng.uniform(0.3, 0.9),
                                 rng.uniform(0.3, 0.9)};
    }
    {
        Vec3 l{rng.uniform(-1.0, 1.0), rng.uniform(0.2, 1.0), rng.uniform(-1.0, 1.0)};
        scene.light_dir = normalized(l);
    }
    const int count = 1 + int(rng.uniform_index(4));
    while (int(scene.spheres.size()) < count) {
        Sphere s;
        s.radius = rng.uniform(0.2, 0.8);
        Vec3 c{rng.uniform(-1.0, 1.0) * (scene.half_extents[0] - s.radius),
               rng.uniform(-1.0, 1.0) * (scene.half_extents[1] - s.radius),
               rng.uniform(-1.0, 1.0) * (scene.half_extents[2] - s.radius)};
        // keep every sphere surface at least 0.5 m from the camera
        if (norm(c) < s.radius + 0.5) continue;
        s.center = c;
        s.albedo = {rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95), rng.uniform(0.2, 0.95)};
        scene.spheres.push_back(s);
    }
    return scene;
}

RenderResult render(const Scene& scene, int height, int width) {
    if (height < 1 || width != 2 * height) {
        throw ShapeError("render requires width == 2 * height");
    }
    RenderResult out;
    out.rgb = Tensor4({1, 3, height, width}, 0.0);
    out.depth.depth = Tensor2(height, width, 0.0);
    out.depth.mask = Tensor2(height, width, 1.0);

    for (int x = 0; x < height; ++x) {
        for (int y = 0; y < width; ++y) {
            const Vec3 dir = sphere_to_direction(pixel_to_sphere(x, y, height, width));

            int wall_axis = 0;
            double t = ray_box_exit(dir, scene.half_extents, &wall_axis);
            // inward-facing wall normal
            Vec3 normal{0.0, 0.0, 0.0};
            normal[std::size_t(wall_axis)] = dir[std::size_t(wall_axis)] > 0.0 ? -1.0 : 1.0;
            const int face = 2 * wall_axis + (dir[std::size_t(wall_axis)] > 0.0 ? 1 : 0);
            Vec3 albedo = scene.wall_albedos[face];

            for (const Sphere& s : scene.spheres) {
                double ts = 0.0;
                if (ray_sphere_hit(dir, s, &ts) && ts < t) {
                    t = ts;
                    const Vec3 hit{dir[0] * ts, dir[1] * ts, dir[2] * ts};
                    normal = normalized(Vec3{hit[0] - s.center[0], hit[1] - s.center[1],
                                             hit[2] - s.center[2]});
                    albedo = s.albedo;
                }
            }

            const double lambert = std::max(0.0, dot(normal, scene.light_dir));
            const double shade = std::max(0.1, lambert);
            out.depth.depth.at(x, y) = t;
            for (int ch = 0; ch < 3; ++ch) {
                out.rgb.at(0, ch, x, y) = albedo[std::size_t(ch)] * shade;
            }
        }
    }
    return out;
}

}  // namespace damo
