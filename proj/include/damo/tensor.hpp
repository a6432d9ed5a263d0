#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "damo/errors.hpp"

namespace damo {

struct Shape4 {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    bool operator==(const Shape4&) const = default;
    std::size_t count() const {
        return std::size_t(n) * std::size_t(c) * std::size_t(h) * std::size_t(w);
    }
};

std::string to_string(const Shape4& s);

// Dense rank-4 array (batch, channel, height, width), row-major with w fastest.
// All values are 64-bit; file I/O quantizes at the edges, never in here.
class Tensor4 {
public:
    Tensor4() = default;
    Tensor4(Shape4 shape, double value);

    const Shape4& shape() const { return shape_; }
    int n() const { return shape_.n; }
    int c() const { return shape_.c; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int n, int c, int i, int j) {
        return data_[((std::size_t(n) * shape_.c + c) * shape_.h + i) * shape_.w + j];
    }
    const double& at(int n, int c, int i, int j) const {
        return data_[((std::size_t(n) * shape_.c + c) * shape_.h + i) * shape_.w + j];
    }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

private:
    Shape4 shape_;
    std::vector<double> data_;
};

struct Shape2 {
    int h = 0;
    int w = 0;

    bool operator==(const Shape2&) const = default;
    std::size_t count() const { return std::size_t(h) * std::size_t(w); }
};

// Single-channel companion of Tensor4 (weight matrices, depth maps).
class Tensor2 {
public:
    Tensor2() = default;
    Tensor2(int h, int w, double value);

    const Shape2& shape() const { return shape_; }
    int h() const { return shape_.h; }
    int w() const { return shape_.w; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& at(int i, int j) { return data_[std::size_t(i) * shape_.w + j]; }
    const double& at(int i, int j) const { return data_[std::size_t(i) * shape_.w + j]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

private:
    Shape2 shape_;
    std::vector<double> data_;
};

Tensor4 new_filled(Shape4 shape, double value);

Tensor4 map_binary(const Tensor4& a, const Tensor4& b,
                   const std::function<double(double, double)>& f);

double sigmoid_scalar(double x);
Tensor4 sigmoid(const Tensor4& x);

enum class Reduce { Sum, Mean, Max };

double reduce(const Tensor4& x, Reduce kind);

bool all_finite(const Tensor4& x);
bool all_finite(const Tensor2& x);

// Conversions between the two ranks; Tensor2 maps to shape (1, 1, h, w).
Tensor4 lift(const Tensor2& x);
Tensor2 squeeze2(const Tensor4& x);

// Entry (b, 0, :, :) of a single-channel batch as a Tensor2.
Tensor2 squeeze_slice(const Tensor4& x, int batch);

// Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / 2h, entry by entry.
// The oracle every backward pass in this library is checked against.
Tensor4 numeric_gradient(const std::function<double(const Tensor4&)>& f,
                         const Tensor4& x, double h);
Tensor2 numeric_gradient(const std::function<double(const Tensor2&)>& f,
                         const Tensor2& x, double h);

}  // namespace damo
