#pragma once

#include <array>

#include "damo/tensor.hpp"

namespace damo {

// Point on the unit sphere. phi is the polar angle measured from the north
// pole in [0, pi]; theta is longitude in [0, 2*pi].
struct SphericalCoord {
    SphericalCoord(double theta, double phi);

    double theta;
    double phi;
};

using Vec3 = std::array<double, 3>;

// Per-pixel loss weights over an equirectangular grid. Weight depends only on
// latitude, so every row is constant.
struct WeightMatrix {
    Tensor2 grid;
};

// Pixel-center convention: row x covers polar angles [pi*x/H, pi*(x+1)/H] and
// is represented by its center pi*(x+0.5)/H; same for columns in longitude.
SphericalCoord pixel_to_sphere(int x, int y, int height, int width);

// phi = 0 maps to the +y axis (north pole), the equator lies in the xz plane.
Vec3 sphere_to_direction(const SphericalCoord& c);

// Area-ratio weight 1 - |cos phi|: the spherical-cap area integral from the
// nearest pole to the pixel's latitude, symmetric about the equator. With
// normalize_unit_mean the grid is rescaled so its mean is exactly 1.
WeightMatrix spherical_weight_matrix(int height, int width,
                                     bool normalize_unit_mean = false);

}  // namespace damo
