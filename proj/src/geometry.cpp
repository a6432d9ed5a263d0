#include "damo/geometry.hpp"

#include <cmath>
#include <numbers>

namespace damo {

namespace {
constexpr double kPi = std::numbers::pi;
}

SphericalCoord::SphericalCoord(double theta_, double phi_) : theta(theta_), phi(phi_) {
    if (!(theta >= 0.0 && theta <= 2.0 * kPi)) {
        throw DomainError("theta out of [0, 2pi]");
    }
    if (!(phi >= 0.0 && phi <= kPi)) {
        throw DomainError("phi out of [0, pi]");
    }
}

SphericalCoord pixel_to_sphere(int x, int y, int height, int width) {
    if (x < 0 || x >= height || y < 0 || y >= width) {
        throw UsageError("pixel index out of range");
    }
    const double phi = kPi * (double(x) + 0.5) / double(height);
    const double theta = 2.0 * kPi * (double(y) + 0.5) / double(width);
    return SphericalCoord(theta, phi);
}

Vec3 sphere_to_direction(const SphericalCoord& c) {
    const double sp = std::sin(c.phi);
    return {sp * std::cos(c.theta), std::cos(c.phi), sp * std::sin(c.theta)};
}

WeightMatrix spherical_weight_matrix(int height, int width, bool normalize_unit_mean) {
    if (height < 1 || width < 1) {
        throw ShapeError("weight matrix dims must be >= 1");
    }
    Tensor2 grid(height, width, 0.0);
    for (int x = 0; x < height; ++x) {
        const double phi = kPi * (double(x) + 0.5) / double(height);
        const double w = 1.0 - std::abs(std::cos(phi));
        for (int y = 0; y < width; ++y) {
            grid.at(x, y) = w;
        }
    }
    if (normalize_unit_mean) {
        double mean = 0.0;
        for (std::size_t i = 0; i < grid.size(); ++i) mean += grid[i];
        mean /= double(grid.size());
        for (std::size_t i = 0; i < grid.size(); ++i) grid[i] /= mean;
    }
    return WeightMatrix{std::move(grid)};
}

}  // namespace damo
