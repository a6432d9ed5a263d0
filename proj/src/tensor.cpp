#include "damo/tensor.hpp"

#include <cmath>
#include <sstream>

namespace damo {

std::string to_string(const Shape4& s) {
    std::ostringstream os;
    os << "(" << s.n << "," << s.c << "," << s.h << "," << s.w << ")";
    return os.str();
}

namespace {

void check_shape4(const Shape4& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
        throw ShapeError("tensor dims must all be >= 1, got " + to_string(s));
    }
}

}  // namespace

Tensor4::Tensor4(Shape4 shape, double value) : shape_(shape) {
    check_shape4(shape);
    data_.assign(shape.count(), value);
}

Tensor2::Tensor2(int h, int w, double value) : shape_{h, w} {
    if (h < 1 || w < 1) {
        throw ShapeError("tensor2 dims must be >= 1");
    }
    data_.assign(shape_.count(), value);
}

Tensor4 new_filled(Shape4 shape, double value) {
    return Tensor4(shape, value);
}

Tensor4 map_binary(const Tensor4& a, const Tensor4& b,
                   const std::function<double(double, double)>& f) {
    if (a.shape() != b.shape()) {
        throw ShapeError("map_binary shape mismatch: " + to_string(a.shape()) +
                         " vs " + to_string(b.shape()));
    }
    Tensor4 out(a.shape(), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        out[i] = f(a[i], b[i]);
    }
    return out;
}

double sigmoid_scalar(double x) {
    // Split by sign so exp never overflows.
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor4 sigmoid(const Tensor4& x) {
    Tensor4 out(x.shape(), 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = sigmoid_scalar(x[i]);
    }
    return out;
}

double reduce(const Tensor4& x, Reduce kind) {
    if (x.empty()) {
        throw ShapeError("reduce on empty tensor");
    }
    switch (kind) {
        case Reduce::Sum:
        case Reduce::Mean: {
            double s = 0.0;
            for (std::size_t i = 0; i < x.size(); ++i) {
                s += x[i];
            }
            return kind == Reduce::Sum ? s : s / double(x.size());
        }
        case Reduce::Max: {
            double m = x[0];
            for (std::size_t i = 1; i < x.size(); ++i) {
                if (x[i] > m) m = x[i];
            }
            return m;
        }
    }
    throw UsageError("unknown reduce kind");
}

bool all_finite(const Tensor4& x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

bool all_finite(const Tensor2& x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

Tensor4 lift(const Tensor2& x) {
    Tensor4 out({1, 1, x.h(), x.w()}, 0.0);
    out.values() = x.values();
    return out;
}

Tensor2 squeeze2(const Tensor4& x) {
    if (x.n() != 1 || x.c() != 1) {
        throw ShapeError("squeeze2 needs shape (1,1,h,w), got " + to_string(x.shape()));
    }
    Tensor2 out(x.h(), x.w(), 0.0);
    out.values() = x.values();
    return out;
}

Tensor2 squeeze_slice(const Tensor4& x, int batch) {
    if (x.c() != 1) {
        throw ShapeError("squeeze_slice needs a single-channel tensor");
    }
    if (batch < 0 || batch >= x.n()) {
        throw UsageError("squeeze_slice batch index out of range");
    }
    Tensor2 out(x.h(), x.w(), 0.0);
    for (int i = 0; i < x.h(); ++i) {
        for (int j = 0; j < x.w(); ++j) out.at(i, j) = x.at(batch, 0, i, j);
    }
    return out;
}

Tensor4 numeric_gradient(const std::function<double(const Tensor4&)>& f,
                         const Tensor4& x, double h) {
    if (h <= 0.0) {
        throw UsageError("numeric_gradient step must be positive");
    }
    Tensor4 grad(x.shape(), 0.0);
    Tensor4 probe = x;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double orig = probe[i];
        probe[i] = orig + h;
        const double fp = f(probe);
        probe[i] = orig - h;
        const double fm = f(probe);
        probe[i] = orig;
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw EvalError("numeric_gradient: probed function returned a non-finite value");
        }
        grad[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

Tensor2 numeric_gradient(const std::function<double(const Tensor2&)>& f,
                         const Tensor2& x, double h) {
    auto wrapped = [&](const Tensor4& t) { return f(squeeze2(t)); };
    return squeeze2(numeric_gradient(wrapped, lift(x), h));
}

}  // namespace damo
