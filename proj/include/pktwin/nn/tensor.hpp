#pragma once
// Dense row-major tensor. Training instantiates T=float; the finite-difference
// gradient oracles in the test suite instantiate T=double.

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace pktwin::nn {

template <class T>
struct Tensor {
    std::vector<size_t> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<size_t> s) : shape(std::move(s)), data(count(shape), T(0)) {}

    static size_t count(const std::vector<size_t>& s) {
        size_t n = 1;
        for (size_t d : s) n *= d;
        return n;
    }

    size_t size() const { return data.size(); }
    size_t dim(size_t i) const { return shape[i]; }

    T& operator[](size_t i) { return data[i]; }
    const T& operator[](size_t i) const { return data[i]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    void zero() { fill(T(0)); }

    bool finite() const {
        for (T v : data)
            if (!std::isfinite(double(v))) return false;
        return true;
    }
};

} // namespace pktwin::nn
