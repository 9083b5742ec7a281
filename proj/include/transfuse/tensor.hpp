#pragma once

#include <cassert>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "transfuse/errors.hpp"

namespace transfuse {

// Dense row-major n-d array of doubles. Shapes are small vectors of ints;
// all the heavy lifting happens through raw pointers or Eigen maps.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(numel_of(shape), 0.0) {}

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

    static Tensor full(std::vector<int> s, double v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    static Tensor from(std::vector<int> s, std::vector<double> d) {
        Tensor t;
        t.shape = std::move(s);
        t.data = std::move(d);
        assert(static_cast<int>(t.data.size()) == numel_of(t.shape));
        return t;
    }

    static int numel_of(const std::vector<int>& s) {
        int n = 1;
        for (const int d : s) n *= d;
        return n;
    }

    int numel() const { return static_cast<int>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    // 2-d accessors; only meaningful when ndim() == 2.
    int rows() const { return shape[0]; }
    int cols() const { return shape[1]; }

    double& operator[](int i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return data[static_cast<std::size_t>(i)]; }

    double& at2(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    double at2(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const;
    double squared_norm() const;
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b)) throw ShapeError(std::string(where) + ": shape mismatch");
}

}  // namespace transfuse
