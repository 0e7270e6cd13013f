#pragma once

#include <algorithm>
#include <array>
#include <cassert>
#include <cstddef>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sigquant {

// Dense rank-4 array in NCHW order. Rank-2 data (logits, dense activations)
// is stored as (n, c, 1, 1).
template <typename T>
class Tensor {
  public:
    Tensor() : n_(0), c_(0), h_(0), w_(0) {}
    Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w)
        : n_(n), c_(c), h_(h), w_(w), data_(n * c * h * w, T(0)) {}

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.n_, o.c_, o.h_, o.w_); }

    std::size_t n() const { return n_; }
    std::size_t c() const { return c_; }
    std::size_t h() const { return h_; }
    std::size_t w() const { return w_; }
    std::size_t size() const { return data_.size(); }
    bool same_shape(const Tensor& o) const {
        return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
    }
    std::string shape_str() const {
        return std::to_string(n_) + "x" + std::to_string(c_) + "x" + std::to_string(h_) + "x" +
               std::to_string(w_);
    }

    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data_[((n * c_ + c) * h_ + h) * w_ + w];
    }
    const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data_[((n * c_ + c) * h_ + h) * w_ + w];
    }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& raw() { return data_; }
    const std::vector<T>& raw() const { return data_; }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    void fill_uniform(std::mt19937_64& rng, T lo, T hi) {
        std::uniform_real_distribution<double> d(static_cast<double>(lo), static_cast<double>(hi));
        for (auto& v : data_) v = static_cast<T>(d(rng));
    }

    void fill_normal(std::mt19937_64& rng, double mean, double stddev) {
        std::normal_distribution<double> d(mean, stddev);
        for (auto& v : data_) v = static_cast<T>(d(rng));
    }

    Tensor slice_n(std::size_t start, std::size_t count) const {
        assert(start + count <= n_);
        Tensor out(count, c_, h_, w_);
        const std::size_t stride = c_ * h_ * w_;
        std::copy(data_.begin() + start * stride, data_.begin() + (start + count) * stride,
                  out.data_.begin());
        return out;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(n_, c_, h_, w_);
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return out;
    }

  private:
    std::size_t n_, c_, h_, w_;
    std::vector<T> data_;
};

template <typename T>
double mean_squared_error(const Tensor<T>& a, const Tensor<T>& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return a.size() ? acc / static_cast<double>(a.size()) : 0.0;
}

}  // namespace sigquant
