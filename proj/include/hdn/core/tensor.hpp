#pragma once

#include <cassert>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "hdn/core/common.hpp"

namespace hdn {

// Tensor storage allocator: 64-byte aligned so SIMD kernels see the same
// alignment for every buffer (bitwise-reproducible vectorization), and
// default-initializing so fully overwritten op outputs skip the zero-fill.
template <typename T>
struct TensorAllocator {
    using value_type = T;
    TensorAllocator() = default;
    template <typename U>
    TensorAllocator(const TensorAllocator<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(64)));
    }
    void deallocate(T* p, std::size_t n) {
        ::operator delete(p, n * sizeof(T), std::align_val_t(64));
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        if constexpr (sizeof...(Args) == 0)
            ::new (static_cast<void*>(p)) U;
        else
            ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
    bool operator==(const TensorAllocator&) const { return true; }
    bool operator!=(const TensorAllocator&) const { return false; }
};

template <typename T>
using Vec = std::vector<T, TensorAllocator<T>>;

// Dense row-major tensor. Images and activations use NCHW order.
// Tensor(shape) zero-fills; Tensor::uninit is for outputs written in full.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    Vec<T> v;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)), v(count(shape), T(0)) {}
    Tensor(std::vector<int> s, T fill_value) : shape(std::move(s)), v(count(shape), fill_value) {}

    static Tensor uninit(std::vector<int> s) {
        Tensor t;
        t.shape = std::move(s);
        t.v.resize(count(t.shape));
        return t;
    }

    static std::size_t count(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw ShapeError("negative tensor dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    std::size_t numel() const { return v.size(); }
    bool empty() const { return v.empty(); }
    int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& operator[](std::size_t i) { return v[i]; }
    const T& operator[](std::size_t i) const { return v[i]; }

    // NCHW addressing.
    std::size_t idx4(int n, int c, int h, int w) const {
        assert(shape.size() == 4);
        return ((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w;
    }
    T& at4(int n, int c, int h, int w) { return v[idx4(n, c, h, w)]; }
    const T& at4(int n, int c, int h, int w) const { return v[idx4(n, c, h, w)]; }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }
    void zero() { fill(T(0)); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
        return out;
    }
};

template <typename T>
inline T sum(const Tensor<T>& t) {
    T s = 0;
    for (const T& x : t.v) s += x;
    return s;
}

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + ")";
}

} // namespace hdn
