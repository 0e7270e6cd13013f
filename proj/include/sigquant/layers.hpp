#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sigquant/tensor.hpp"

namespace sigquant {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
};

// Per-stage argmax bookkeeping for index-preserving pooling. Indices are flat
// spatial positions (h * W + w) into the pre-pool map, one per pooled cell.
struct PoolingRecord {
    std::size_t window = 2;
    std::size_t pre_n = 0, pre_c = 0, pre_h = 0, pre_w = 0;
    std::vector<std::uint32_t> indices;  // (n, c, ph, pw) row-major

    std::size_t pooled_h() const { return pre_h / window; }
    std::size_t pooled_w() const { return pre_w / window; }
};

template <typename T>
std::pair<Tensor<T>, PoolingRecord> pool_with_indices(const Tensor<T>& x, std::size_t window) {
    if (window == 0 || x.h() % window != 0 || x.w() % window != 0)
        throw std::invalid_argument("pool_with_indices: spatial dims " + x.shape_str() +
                                    " not divisible by window " + std::to_string(window));
    PoolingRecord rec;
    rec.window = window;
    rec.pre_n = x.n();
    rec.pre_c = x.c();
    rec.pre_h = x.h();
    rec.pre_w = x.w();
    const std::size_t ph = x.h() / window, pw = x.w() / window;
    Tensor<T> out(x.n(), x.c(), ph, pw);
    rec.indices.resize(x.n() * x.c() * ph * pw);
    std::size_t cell = 0;
    for (std::size_t n = 0; n < x.n(); ++n)
        for (std::size_t c = 0; c < x.c(); ++c)
            for (std::size_t i = 0; i < ph; ++i)
                for (std::size_t j = 0; j < pw; ++j, ++cell) {
                    T best = x.at(n, c, i * window, j * window);
                    std::size_t best_idx = (i * window) * x.w() + j * window;
                    for (std::size_t di = 0; di < window; ++di)
                        for (std::size_t dj = 0; dj < window; ++dj) {
                            const std::size_t r = i * window + di, s = j * window + dj;
                            const T v = x.at(n, c, r, s);
                            if (v > best) {  // strict: first position wins ties
                                best = v;
                                best_idx = r * x.w() + s;
                            }
                        }
                    out.at(n, c, i, j) = best;
                    rec.indices[cell] = static_cast<std::uint32_t>(best_idx);
                }
    return {std::move(out), std::move(rec)};
}

template <typename T>
Tensor<T> unpool_with_indices(const Tensor<T>& pooled, const PoolingRecord& rec) {
    if (pooled.n() != rec.pre_n || pooled.c() != rec.pre_c || pooled.h() != rec.pooled_h() ||
        pooled.w() != rec.pooled_w())
        throw std::invalid_argument("unpool_with_indices: pooled shape " + pooled.shape_str() +
                                    " does not match record");
    Tensor<T> out(rec.pre_n, rec.pre_c, rec.pre_h, rec.pre_w);
    std::size_t cell = 0;
    for (std::size_t n = 0; n < pooled.n(); ++n)
        for (std::size_t c = 0; c < pooled.c(); ++c)
            for (std::size_t i = 0; i < pooled.h(); ++i)
                for (std::size_t j = 0; j < pooled.w(); ++j, ++cell) {
                    const std::uint32_t idx = rec.indices[cell];
                    out.at(n, c, idx / rec.pre_w, idx % rec.pre_w) = pooled.at(n, c, i, j);
                }
    return out;
}

// Non-learnable named state (batch-norm running statistics).
struct BufferRef {
    std::string name;
    std::vector<double>* data;
};

// Adjoint of unpool_with_indices: read back the values sitting at the
// recorded positions of a full-size map.
template <typename T>
Tensor<T> gather_pooled(const Tensor<T>& full, const PoolingRecord& rec) {
    if (full.n() != rec.pre_n || full.c() != rec.pre_c || full.h() != rec.pre_h ||
        full.w() != rec.pre_w)
        throw std::invalid_argument("gather_pooled: shape " + full.shape_str() +
                                    " does not match record");
    Tensor<T> out(rec.pre_n, rec.pre_c, rec.pooled_h(), rec.pooled_w());
    std::size_t cell = 0;
    for (std::size_t n = 0; n < out.n(); ++n)
        for (std::size_t c = 0; c < out.c(); ++c)
            for (std::size_t i = 0; i < out.h(); ++i)
                for (std::size_t j = 0; j < out.w(); ++j, ++cell) {
                    const std::uint32_t idx = rec.indices[cell];
                    out.at(n, c, i, j) = full.at(n, c, idx / rec.pre_w, idx % rec.pre_w);
                }
    return out;
}

template <typename T>
class Layer {
  public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, bool training) = 0;
    virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
    virtual void collect_params(std::vector<Param<T>*>&) {}
    virtual void collect_buffers(std::vector<BufferRef>&) {}
    virtual void init_params(std::mt19937_64&) {}
};

template <typename T>
class Conv2d : public Layer<T> {
  public:
    Conv2d(std::string name, std::size_t in_c, std::size_t out_c, std::size_t k = 3)
        : in_c_(in_c), out_c_(out_c), k_(k), pad_(k / 2) {
        if (k % 2 == 0) throw std::invalid_argument("Conv2d: kernel must be odd");
        weight_.name = name + ".weight";
        weight_.value = Tensor<T>(out_c, in_c, k, k);
        weight_.grad = Tensor<T>(out_c, in_c, k, k);
        bias_.name = name + ".bias";
        bias_.value = Tensor<T>(out_c, 1, 1, 1);
        bias_.grad = Tensor<T>(out_c, 1, 1, 1);
    }

    void init_params(std::mt19937_64& rng) override {
        // He initialization
        const double stddev = std::sqrt(2.0 / static_cast<double>(in_c_ * k_ * k_));
        weight_.value.fill_normal(rng, 0.0, stddev);
        bias_.value.fill(T(0));
    }

    // Center-tap identity for stub models (requires in_c == out_c).
    void init_identity() {
        weight_.value.fill(T(0));
        for (std::size_t c = 0; c < out_c_; ++c) weight_.value.at(c, c, k_ / 2, k_ / 2) = T(1);
        bias_.value.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        if (x.c() != in_c_)
            throw std::invalid_argument("Conv2d: channel mismatch " + x.shape_str());
        x_ = x;
        Tensor<T> y(x.n(), out_c_, x.h(), x.w());
        const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(x.h());
        const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(x.w());
        for (std::size_t n = 0; n < x.n(); ++n)
            for (std::size_t oc = 0; oc < out_c_; ++oc) {
                const T b = bias_.value.at(oc, 0, 0, 0);
                for (std::ptrdiff_t i = 0; i < H; ++i)
                    for (std::ptrdiff_t j = 0; j < W; ++j) {
                        T acc = b;
                        for (std::size_t ic = 0; ic < in_c_; ++ic)
                            for (std::size_t u = 0; u < k_; ++u) {
                                const std::ptrdiff_t r = i + static_cast<std::ptrdiff_t>(u) -
                                                         static_cast<std::ptrdiff_t>(pad_);
                                if (r < 0 || r >= H) continue;
                                for (std::size_t v = 0; v < k_; ++v) {
                                    const std::ptrdiff_t s = j + static_cast<std::ptrdiff_t>(v) -
                                                             static_cast<std::ptrdiff_t>(pad_);
                                    if (s < 0 || s >= W) continue;
                                    acc += weight_.value.at(oc, ic, u, v) * x_.at(n, ic, r, s);
                                }
                            }
                        y.at(n, oc, i, j) = acc;
                    }
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx = Tensor<T>::zeros_like(x_);
        const std::ptrdiff_t H = static_cast<std::ptrdiff_t>(x_.h());
        const std::ptrdiff_t W = static_cast<std::ptrdiff_t>(x_.w());
        for (std::size_t n = 0; n < x_.n(); ++n)
            for (std::size_t oc = 0; oc < out_c_; ++oc)
                for (std::ptrdiff_t i = 0; i < H; ++i)
                    for (std::ptrdiff_t j = 0; j < W; ++j) {
                        const T g = dy.at(n, oc, i, j);
                        if (g == T(0)) continue;
                        bias_.grad.at(oc, 0, 0, 0) += g;
                        for (std::size_t ic = 0; ic < in_c_; ++ic)
                            for (std::size_t u = 0; u < k_; ++u) {
                                const std::ptrdiff_t r = i + static_cast<std::ptrdiff_t>(u) -
                                                         static_cast<std::ptrdiff_t>(pad_);
                                if (r < 0 || r >= H) continue;
                                for (std::size_t v = 0; v < k_; ++v) {
                                    const std::ptrdiff_t s = j + static_cast<std::ptrdiff_t>(v) -
                                                             static_cast<std::ptrdiff_t>(pad_);
                                    if (s < 0 || s >= W) continue;
                                    weight_.grad.at(oc, ic, u, v) += g * x_.at(n, ic, r, s);
                                    dx.at(n, ic, r, s) += g * weight_.value.at(oc, ic, u, v);
                                }
                            }
                    }
        return dx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

    Param<T>& weight() { return weight_; }
    Param<T>& bias() { return bias_; }

  private:
    std::size_t in_c_, out_c_, k_, pad_;
    Param<T> weight_, bias_;
    Tensor<T> x_;
};

template <typename T>
class Dense : public Layer<T> {
  public:
    Dense(std::string name, std::size_t in_f, std::size_t out_f) : in_f_(in_f), out_f_(out_f) {
        weight_.name = name + ".weight";
        weight_.value = Tensor<T>(out_f, in_f, 1, 1);
        weight_.grad = Tensor<T>(out_f, in_f, 1, 1);
        bias_.name = name + ".bias";
        bias_.value = Tensor<T>(out_f, 1, 1, 1);
        bias_.grad = Tensor<T>(out_f, 1, 1, 1);
    }

    void init_params(std::mt19937_64& rng) override {
        const double stddev = std::sqrt(2.0 / static_cast<double>(in_f_));
        weight_.value.fill_normal(rng, 0.0, stddev);
        bias_.value.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        if (x.c() * x.h() * x.w() != in_f_)
            throw std::invalid_argument("Dense: feature mismatch " + x.shape_str());
        x_ = x;
        Tensor<T> y(x.n(), out_f_, 1, 1);
        const std::size_t stride = in_f_;
        for (std::size_t n = 0; n < x.n(); ++n)
            for (std::size_t o = 0; o < out_f_; ++o) {
                T acc = bias_.value[o];
                const T* wrow = weight_.value.data() + o * in_f_;
                const T* xin = x.data() + n * stride;
                for (std::size_t i = 0; i < in_f_; ++i) acc += wrow[i] * xin[i];
                y[n * out_f_ + o] = acc;
            }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx = Tensor<T>::zeros_like(x_);
        for (std::size_t n = 0; n < x_.n(); ++n)
            for (std::size_t o = 0; o < out_f_; ++o) {
                const T g = dy[n * out_f_ + o];
                bias_.grad[o] += g;
                T* wg = weight_.grad.data() + o * in_f_;
                const T* wrow = weight_.value.data() + o * in_f_;
                const T* xin = x_.data() + n * in_f_;
                T* dxn = dx.data() + n * in_f_;
                for (std::size_t i = 0; i < in_f_; ++i) {
                    wg[i] += g * xin[i];
                    dxn[i] += g * wrow[i];
                }
            }
        return dx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

  private:
    std::size_t in_f_, out_f_;
    Param<T> weight_, bias_;
    Tensor<T> x_;
};

template <typename T>
class ReLU : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        x_ = x;
        Tensor<T> y = x;
        for (std::size_t i = 0; i < y.size(); ++i)
            if (y[i] < T(0)) y[i] = T(0);
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (x_[i] <= T(0)) dx[i] = T(0);
        return dx;
    }

  private:
    Tensor<T> x_;
};

// Saturating clamp to [0,1]; gradient passes only strictly inside the range.
template <typename T>
class Clamp01 : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        x_ = x;
        Tensor<T> y = x;
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(T(1), std::max(T(0), y[i]));
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx = dy;
        for (std::size_t i = 0; i < dx.size(); ++i)
            if (x_[i] <= T(0) || x_[i] >= T(1)) dx[i] = T(0);
        return dx;
    }

  private:
    Tensor<T> x_;
};

template <typename T>
class BatchNorm2d : public Layer<T> {
  public:
    explicit BatchNorm2d(std::string name, std::size_t channels, double momentum = 0.1,
                         double eps = 1e-5)
        : name_(name), channels_(channels), momentum_(momentum), eps_(eps) {
        gamma_.name = name + ".gamma";
        gamma_.value = Tensor<T>(channels, 1, 1, 1);
        gamma_.grad = Tensor<T>(channels, 1, 1, 1);
        gamma_.value.fill(T(1));
        beta_.name = name + ".beta";
        beta_.value = Tensor<T>(channels, 1, 1, 1);
        beta_.grad = Tensor<T>(channels, 1, 1, 1);
        running_mean_.assign(channels, 0.0);
        running_var_.assign(channels, 1.0);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        x_ = x;
        training_ = training;
        const std::size_t m = x.n() * x.h() * x.w();
        Tensor<T> y = Tensor<T>::zeros_like(x);
        mean_.assign(channels_, 0.0);
        var_.assign(channels_, 0.0);
        for (std::size_t c = 0; c < channels_; ++c) {
            double mu, v;
            if (training) {
                double s = 0.0;
                for (std::size_t n = 0; n < x.n(); ++n)
                    for (std::size_t i = 0; i < x.h(); ++i)
                        for (std::size_t j = 0; j < x.w(); ++j) s += x.at(n, c, i, j);
                mu = s / static_cast<double>(m);
                double sq = 0.0;
                for (std::size_t n = 0; n < x.n(); ++n)
                    for (std::size_t i = 0; i < x.h(); ++i)
                        for (std::size_t j = 0; j < x.w(); ++j) {
                            const double d = x.at(n, c, i, j) - mu;
                            sq += d * d;
                        }
                v = sq / static_cast<double>(m);
                running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mu;
                running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * v;
            } else {
                mu = running_mean_[c];
                v = running_var_[c];
            }
            mean_[c] = mu;
            var_[c] = v;
            const double inv = 1.0 / std::sqrt(v + eps_);
            const double g = gamma_.value[c], b = beta_.value[c];
            for (std::size_t n = 0; n < x.n(); ++n)
                for (std::size_t i = 0; i < x.h(); ++i)
                    for (std::size_t j = 0; j < x.w(); ++j)
                        y.at(n, c, i, j) = static_cast<T>((x.at(n, c, i, j) - mu) * inv * g + b);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        const std::size_t m = x_.n() * x_.h() * x_.w();
        Tensor<T> dx = Tensor<T>::zeros_like(x_);
        for (std::size_t c = 0; c < channels_; ++c) {
            const double inv = 1.0 / std::sqrt(var_[c] + eps_);
            const double g = gamma_.value[c];
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t n = 0; n < x_.n(); ++n)
                for (std::size_t i = 0; i < x_.h(); ++i)
                    for (std::size_t j = 0; j < x_.w(); ++j) {
                        const double d = dy.at(n, c, i, j);
                        const double xh = (x_.at(n, c, i, j) - mean_[c]) * inv;
                        sum_dy += d;
                        sum_dy_xhat += d * xh;
                    }
            gamma_.grad[c] += static_cast<T>(sum_dy_xhat);
            beta_.grad[c] += static_cast<T>(sum_dy);
            for (std::size_t n = 0; n < x_.n(); ++n)
                for (std::size_t i = 0; i < x_.h(); ++i)
                    for (std::size_t j = 0; j < x_.w(); ++j) {
                        const double d = dy.at(n, c, i, j);
                        const double xh = (x_.at(n, c, i, j) - mean_[c]) * inv;
                        double v;
                        if (training_) {
                            v = g * inv *
                                (d - sum_dy / static_cast<double>(m) -
                                 xh * sum_dy_xhat / static_cast<double>(m));
                        } else {
                            v = g * inv * d;  // frozen statistics: pure affine map
                        }
                        dx.at(n, c, i, j) = static_cast<T>(v);
                    }
        }
        return dx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }

    void collect_buffers(std::vector<BufferRef>& out) override {
        out.push_back({name_ + ".running_mean", &running_mean_});
        out.push_back({name_ + ".running_var", &running_var_});
    }

    std::vector<double>& running_mean() { return running_mean_; }
    std::vector<double>& running_var() { return running_var_; }

  private:
    std::string name_;
    std::size_t channels_;
    double momentum_, eps_;
    Param<T> gamma_, beta_;
    std::vector<double> running_mean_, running_var_;
    std::vector<double> mean_, var_;
    Tensor<T> x_;
    bool training_ = false;
};

template <typename T>
class MaxPool2d : public Layer<T> {
  public:
    explicit MaxPool2d(std::size_t window = 2) : window_(window) {}

    Tensor<T> forward(const Tensor<T>& x, bool) override {
        auto [y, rec] = pool_with_indices(x, window_);
        rec_ = std::move(rec);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override { return unpool_with_indices(dy, rec_); }

    const PoolingRecord& record() const { return rec_; }

  private:
    std::size_t window_;
    PoolingRecord rec_;
};

template <typename T>
class Flatten : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        n_ = x.n();
        c_ = x.c();
        h_ = x.h();
        w_ = x.w();
        Tensor<T> y(x.n(), x.c() * x.h() * x.w(), 1, 1);
        y.raw() = x.raw();
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(n_, c_, h_, w_);
        dx.raw() = dy.raw();
        return dx;
    }

  private:
    std::size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

template <typename T>
class GlobalAvgPool : public Layer<T> {
  public:
    Tensor<T> forward(const Tensor<T>& x, bool) override {
        n_ = x.n();
        c_ = x.c();
        h_ = x.h();
        w_ = x.w();
        Tensor<T> y(x.n(), x.c(), 1, 1);
        const double inv = 1.0 / static_cast<double>(h_ * w_);
        for (std::size_t n = 0; n < x.n(); ++n)
            for (std::size_t c = 0; c < x.c(); ++c) {
                double s = 0.0;
                for (std::size_t i = 0; i < h_; ++i)
                    for (std::size_t j = 0; j < w_; ++j) s += x.at(n, c, i, j);
                y.at(n, c, 0, 0) = static_cast<T>(s * inv);
            }
        return y;
    }
    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> dx(n_, c_, h_, w_);
        const T inv = T(1) / static_cast<T>(h_ * w_);
        for (std::size_t n = 0; n < n_; ++n)
            for (std::size_t c = 0; c < c_; ++c) {
                const T g = dy.at(n, c, 0, 0) * inv;
                for (std::size_t i = 0; i < h_; ++i)
                    for (std::size_t j = 0; j < w_; ++j) dx.at(n, c, i, j) = g;
            }
        return dx;
    }

  private:
    std::size_t n_ = 0, c_ = 0, h_ = 0, w_ = 0;
};

template <typename T>
class Sequential : public Layer<T> {
  public:
    Sequential() = default;

    template <typename L, typename... Args>
    L* emplace(Args&&... args) {
        auto layer = std::make_unique<L>(std::forward<Args>(args)...);
        L* raw = layer.get();
        layers_.push_back(std::move(layer));
        return raw;
    }

    void push(std::unique_ptr<Layer<T>> layer) { layers_.push_back(std::move(layer)); }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> cur = x;
        for (auto& l : layers_) cur = l->forward(cur, training);
        return cur;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> cur = dy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
        return cur;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        for (auto& l : layers_) l->collect_params(out);
    }

    void collect_buffers(std::vector<BufferRef>& out) override {
        for (auto& l : layers_) l->collect_buffers(out);
    }

    void init_params(std::mt19937_64& rng) override {
        for (auto& l : layers_) l->init_params(rng);
    }

    std::size_t size() const { return layers_.size(); }
    Layer<T>* at(std::size_t i) { return layers_[i].get(); }

  private:
    std::vector<std::unique_ptr<Layer<T>>> layers_;
};

// conv-bn-relu-conv-bn plus skip; 1x1 projection when channel counts differ.
template <typename T>
class ResidualBlock : public Layer<T> {
  public:
    ResidualBlock(std::string name, std::size_t in_c, std::size_t out_c) {
        conv1_ = std::make_unique<Conv2d<T>>(name + ".conv1", in_c, out_c, 3);
        bn1_ = std::make_unique<BatchNorm2d<T>>(name + ".bn1", out_c);
        conv2_ = std::make_unique<Conv2d<T>>(name + ".conv2", out_c, out_c, 3);
        bn2_ = std::make_unique<BatchNorm2d<T>>(name + ".bn2", out_c);
        if (in_c != out_c) proj_ = std::make_unique<Conv2d<T>>(name + ".proj", in_c, out_c, 1);
    }

    void init_params(std::mt19937_64& rng) override {
        conv1_->init_params(rng);
        conv2_->init_params(rng);
        if (proj_) proj_->init_params(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> main = bn1_->forward(conv1_->forward(x, training), training);
        main = relu1_.forward(main, training);
        main = bn2_->forward(conv2_->forward(main, training), training);
        Tensor<T> skip = proj_ ? proj_->forward(x, training) : x;
        pre_relu_ = Tensor<T>::zeros_like(main);
        for (std::size_t i = 0; i < main.size(); ++i) pre_relu_[i] = main[i] + skip[i];
        Tensor<T> y = pre_relu_;
        for (auto& v : y.raw())
            if (v < T(0)) v = T(0);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> d = dy;
        for (std::size_t i = 0; i < d.size(); ++i)
            if (pre_relu_[i] <= T(0)) d[i] = T(0);
        Tensor<T> dmain = conv1_->backward(bn1_->backward(relu1_.backward(
            conv2_->backward(bn2_->backward(d)))));
        Tensor<T> dskip = proj_ ? proj_->backward(d) : d;
        for (std::size_t i = 0; i < dmain.size(); ++i) dmain[i] += dskip[i];
        return dmain;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        conv1_->collect_params(out);
        bn1_->collect_params(out);
        conv2_->collect_params(out);
        bn2_->collect_params(out);
        if (proj_) proj_->collect_params(out);
    }

    void collect_buffers(std::vector<BufferRef>& out) override {
        bn1_->collect_buffers(out);
        bn2_->collect_buffers(out);
    }

  private:
    std::unique_ptr<Conv2d<T>> conv1_, conv2_, proj_;
    std::unique_ptr<BatchNorm2d<T>> bn1_, bn2_;
    ReLU<T> relu1_;
    Tensor<T> pre_relu_;
};

// Parallel 1x1 / 3x3 / 5x5 convolutions concatenated along channels.
template <typename T>
class MultiBranchBlock : public Layer<T> {
  public:
    MultiBranchBlock(std::string name, std::size_t in_c, std::size_t branch_c)
        : branch_c_(branch_c) {
        b1_ = std::make_unique<Conv2d<T>>(name + ".b1", in_c, branch_c, 1);
        b3_ = std::make_unique<Conv2d<T>>(name + ".b3", in_c, branch_c, 3);
        b5_ = std::make_unique<Conv2d<T>>(name + ".b5", in_c, branch_c, 5);
    }

    void init_params(std::mt19937_64& rng) override {
        b1_->init_params(rng);
        b3_->init_params(rng);
        b5_->init_params(rng);
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> y1 = b1_->forward(x, training);
        Tensor<T> y3 = b3_->forward(x, training);
        Tensor<T> y5 = b5_->forward(x, training);
        Tensor<T> y(x.n(), 3 * branch_c_, x.h(), x.w());
        concat_into(y, y1, 0);
        concat_into(y, y3, branch_c_);
        concat_into(y, y5, 2 * branch_c_);
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy) override {
        Tensor<T> d1 = slice_channels(dy, 0);
        Tensor<T> d3 = slice_channels(dy, branch_c_);
        Tensor<T> d5 = slice_channels(dy, 2 * branch_c_);
        Tensor<T> dx = b1_->backward(d1);
        Tensor<T> dx3 = b3_->backward(d3);
        Tensor<T> dx5 = b5_->backward(d5);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dx3[i] + dx5[i];
        return dx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        b1_->collect_params(out);
        b3_->collect_params(out);
        b5_->collect_params(out);
    }

  private:
    static void concat_into(Tensor<T>& dst, const Tensor<T>& src, std::size_t c0) {
        for (std::size_t n = 0; n < src.n(); ++n)
            for (std::size_t c = 0; c < src.c(); ++c)
                for (std::size_t i = 0; i < src.h(); ++i)
                    for (std::size_t j = 0; j < src.w(); ++j)
                        dst.at(n, c0 + c, i, j) = src.at(n, c, i, j);
    }
    Tensor<T> slice_channels(const Tensor<T>& src, std::size_t c0) const {
        Tensor<T> out(src.n(), branch_c_, src.h(), src.w());
        for (std::size_t n = 0; n < src.n(); ++n)
            for (std::size_t c = 0; c < branch_c_; ++c)
                for (std::size_t i = 0; i < src.h(); ++i)
                    for (std::size_t j = 0; j < src.w(); ++j)
                        out.at(n, c, i, j) = src.at(n, c0 + c, i, j);
        return out;
    }

    std::size_t branch_c_;
    std::unique_ptr<Conv2d<T>> b1_, b3_, b5_;
};

// --- loss -------------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
    Tensor<T> p = logits;
    const std::size_t k = logits.c();
    for (std::size_t n = 0; n < logits.n(); ++n) {
        T mx = p[n * k];
        for (std::size_t i = 1; i < k; ++i) mx = std::max(mx, p[n * k + i]);
        double z = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            p[n * k + i] = static_cast<T>(std::exp(static_cast<double>(p[n * k + i] - mx)));
            z += p[n * k + i];
        }
        for (std::size_t i = 0; i < k; ++i) p[n * k + i] = static_cast<T>(p[n * k + i] / z);
    }
    return p;
}

// Mean cross-entropy over the batch; gradient w.r.t. logits.
template <typename T>
std::pair<double, Tensor<T>> cross_entropy_loss(const Tensor<T>& logits,
                                                const std::vector<int>& labels) {
    if (logits.n() != labels.size())
        throw std::invalid_argument("cross_entropy_loss: batch/label count mismatch");
    Tensor<T> p = softmax(logits);
    const std::size_t k = logits.c();
    double loss = 0.0;
    Tensor<T> dlogits = p;
    const double invn = 1.0 / static_cast<double>(logits.n());
    for (std::size_t n = 0; n < logits.n(); ++n) {
        const int y = labels[n];
        loss -= std::log(std::max(1e-12, static_cast<double>(p[n * k + y])));
        dlogits[n * k + y] -= T(1);
    }
    for (auto& v : dlogits.raw()) v = static_cast<T>(v * invn);
    return {loss * invn, std::move(dlogits)};
}

// --- optimizer --------------------------------------------------------

template <typename T>
class MomentumSGD {
  public:
    MomentumSGD(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

    void step(const std::vector<Param<T>*>& params) {
        if (velocity_.size() != params.size()) {
            velocity_.clear();
            for (auto* p : params) velocity_.push_back(Tensor<T>::zeros_like(p->value));
        }
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& v = velocity_[i];
            auto& p = *params[i];
            for (std::size_t j = 0; j < v.size(); ++j) {
                v[j] = static_cast<T>(momentum_ * v[j] - lr_ * p.grad[j]);
                p.value[j] += v[j];
            }
        }
    }

    static void zero_grads(const std::vector<Param<T>*>& params) {
        for (auto* p : params) p->grad.fill(T(0));
    }

    void set_lr(double lr) { lr_ = lr; }
    double lr() const { return lr_; }

  private:
    double lr_, momentum_;
    std::vector<Tensor<T>> velocity_;
};

}  // namespace sigquant
