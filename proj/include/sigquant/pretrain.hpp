#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sigquant/modelzoo.hpp"

namespace sigquant {

struct AugmentConfig {
    bool scale = false;
    bool rotation = false;
    bool shift = false;
    bool noise = false;
    bool blur = false;
    bool brightness = false;
    bool contrast = false;
    bool color = false;
    bool mirror = false;

    double scale_range = 0.1;       // factor in [1-r, 1+r]
    double rotation_deg = 15.0;     // angle in [-d, d]
    int shift_max = 3;              // pixels
    double noise_amp = 0.05;        // uniform [-a, a]
    double blur_prob = 0.5;
    double brightness_delta = 0.2;  // additive in [-b, b]
    double contrast_range = 0.2;    // gain in [1-c, 1+c]
    double color_range = 0.1;       // per-channel gain
    double mirror_prob = 0.5;

    bool any() const {
        return scale || rotation || shift || noise || blur || brightness || contrast || color ||
               mirror;
    }
};

namespace detail {

template <typename T>
T sample_clamped(const Tensor<T>& img, std::size_t n, std::size_t c, long i, long j) {
    const long H = static_cast<long>(img.h()), W = static_cast<long>(img.w());
    i = std::max(0L, std::min(H - 1, i));
    j = std::max(0L, std::min(W - 1, j));
    return img.at(n, c, static_cast<std::size_t>(i), static_cast<std::size_t>(j));
}

}  // namespace detail

// Per-image stochastic augmentation. With every flag off the input is
// returned bit-exactly; otherwise the result is clamped to [0,1].
template <typename T>
Tensor<T> augment(const Tensor<T>& batch, const AugmentConfig& cfg, std::mt19937_64& rng) {
    if (!cfg.any()) return batch;
    Tensor<T> out = batch;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t H = batch.h(), W = batch.w();
    const double ch = (static_cast<double>(H) - 1.0) / 2.0;
    const double cw = (static_cast<double>(W) - 1.0) / 2.0;
    for (std::size_t n = 0; n < batch.n(); ++n) {
        // geometric ops share one nearest-neighbor resample
        if (cfg.scale || cfg.rotation || cfg.shift) {
            double f = 1.0, theta = 0.0;
            long dx = 0, dy = 0;
            if (cfg.scale) f = 1.0 + cfg.scale_range * (2.0 * unit(rng) - 1.0);
            if (cfg.rotation)
                theta = cfg.rotation_deg * (2.0 * unit(rng) - 1.0) * M_PI / 180.0;
            if (cfg.shift) {
                std::uniform_int_distribution<long> d(-cfg.shift_max, cfg.shift_max);
                dy = d(rng);
                dx = d(rng);
            }
            const double cs = std::cos(theta), sn = std::sin(theta);
            Tensor<T> src = out;
            for (std::size_t c = 0; c < batch.c(); ++c)
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j) {
                        const double yy = (static_cast<double>(i) - ch) / f;
                        const double xx = (static_cast<double>(j) - cw) / f;
                        const long si = std::lround(cs * yy - sn * xx + ch) - dy;
                        const long sj = std::lround(sn * yy + cs * xx + cw) - dx;
                        out.at(n, c, i, j) = detail::sample_clamped(src, n, c, si, sj);
                    }
        }
        if (cfg.noise) {
            std::uniform_real_distribution<double> d(-cfg.noise_amp, cfg.noise_amp);
            for (std::size_t c = 0; c < batch.c(); ++c)
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j)
                        out.at(n, c, i, j) = static_cast<T>(out.at(n, c, i, j) + d(rng));
        }
        if (cfg.blur && unit(rng) < cfg.blur_prob) {
            Tensor<T> src = out;
            for (std::size_t c = 0; c < batch.c(); ++c)
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j) {
                        double s = 0.0;
                        for (long di = -1; di <= 1; ++di)
                            for (long dj = -1; dj <= 1; ++dj)
                                s += detail::sample_clamped(src, n, c,
                                                            static_cast<long>(i) + di,
                                                            static_cast<long>(j) + dj);
                        out.at(n, c, i, j) = static_cast<T>(s / 9.0);
                    }
        }
        if (cfg.brightness) {
            const double b = cfg.brightness_delta * (2.0 * unit(rng) - 1.0);
            for (std::size_t c = 0; c < batch.c(); ++c)
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j)
                        out.at(n, c, i, j) = static_cast<T>(out.at(n, c, i, j) + b);
        }
        if (cfg.contrast) {
            const double g = 1.0 + cfg.contrast_range * (2.0 * unit(rng) - 1.0);
            for (std::size_t c = 0; c < batch.c(); ++c)
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j)
                        out.at(n, c, i, j) =
                            static_cast<T>((out.at(n, c, i, j) - 0.5) * g + 0.5);
        }
        if (cfg.color) {
            for (std::size_t c = 0; c < batch.c(); ++c) {
                const double g = 1.0 + cfg.color_range * (2.0 * unit(rng) - 1.0);
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W; ++j)
                        out.at(n, c, i, j) = static_cast<T>(out.at(n, c, i, j) * g);
            }
        }
        if (cfg.mirror && unit(rng) < cfg.mirror_prob) {
            for (std::size_t c = 0; c < batch.c(); ++c)
                for (std::size_t i = 0; i < H; ++i)
                    for (std::size_t j = 0; j < W / 2; ++j)
                        std::swap(out.at(n, c, i, j), out.at(n, c, i, W - 1 - j));
        }
    }
    for (auto& v : out.raw()) v = std::min(T(1), std::max(T(0), v));
    return out;
}

struct PretrainConfig {
    double initial_lr = 0.01;
    double momentum = 0.9;
    double decay_factor = 0.2;
    int patience_checks = 2;
    std::size_t check_interval = 50000;  // samples between loss checks
    std::size_t max_samples = 0;         // 0 = bounded by the stream in single-pass mode
    bool single_pass = false;
    std::size_t batch_size = 16;
    AugmentConfig augmentation;
    std::uint64_t seed = 1;

    void validate() const {
        if (!(decay_factor > 0.0 && decay_factor < 1.0))
            throw std::invalid_argument("pretrain: decay_factor must be in (0,1)");
        if (patience_checks < 1) throw std::invalid_argument("pretrain: patience_checks >= 1");
        if (check_interval < 1) throw std::invalid_argument("pretrain: check_interval >= 1");
    }
};

struct TrainingCheck {
    std::size_t samples_seen = 0;
    double loss = 0.0;
    double lr = 0.0;
    double val_loss = -1.0;  // < 0 when not measured
};

struct TrainingLog {
    std::vector<TrainingCheck> checks;

    void to_csv(std::ostream& os) const {
        os << "samples_seen,loss,lr,val_loss\n";
        for (const auto& c : checks) {
            os << c.samples_seen << "," << c.loss << "," << c.lr << ",";
            if (c.val_loss >= 0.0) os << c.val_loss;
            os << "\n";
        }
    }
    void save_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write training log: " + path);
        to_csv(f);
    }
};

// Learning-rate plateau rule: decay iff each of the trailing
// `patience_checks` checks failed to improve on the best loss recorded
// before it. One check per `check_interval` samples.
inline double plateau_schedule(const std::vector<double>& check_losses, double current_lr,
                               double decay_factor = 0.2, int patience_checks = 2) {
    if (check_losses.empty()) throw std::invalid_argument("plateau_schedule: empty history");
    const std::size_t n = check_losses.size();
    if (n < static_cast<std::size_t>(patience_checks) + 1) return current_lr;
    for (std::size_t k = n - static_cast<std::size_t>(patience_checks); k < n; ++k) {
        double best_before = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < k; ++i) best_before = std::min(best_before, check_losses[i]);
        if (check_losses[k] < best_before) return current_lr;  // an improvement resets the rule
    }
    return current_lr * decay_factor;
}

// Diagnostic record carried by a training abort (non-finite loss).
struct PretrainAbort : std::runtime_error {
    PretrainAbort(double lr, std::size_t samples)
        : std::runtime_error("pretrain aborted: non-finite loss at " + std::to_string(samples) +
                             " samples (lr=" + std::to_string(lr) + ")"),
          last_lr(lr),
          samples_seen(samples) {}
    double last_lr;
    std::size_t samples_seen;
};

// Batch provider. size() == 0 means unbounded.
template <typename T>
struct BatchSource {
    virtual ~BatchSource() = default;
    virtual std::size_t size() const = 0;
    virtual Tensor<T> batch(std::size_t start, std::size_t count) = 0;
};

template <typename T>
double reconstruction_mse(AutoencoderModel<T>& ae, BatchSource<T>& data,
                          std::size_t batch_size = 32) {
    const std::size_t n = data.size();
    if (n == 0) throw std::invalid_argument("reconstruction_mse: empty dataset");
    double acc = 0.0;
    std::size_t pixels = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t count = std::min(batch_size, n - start);
        Tensor<T> x = data.batch(start, count);
        Tensor<T> y = ae.reconstruct(x);
        for (std::size_t i = 0; i < x.size(); ++i) {
            const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
            acc += d * d;
        }
        pixels += x.size();
    }
    return acc / static_cast<double>(pixels);
}

// Momentum-SGD reconstruction pre-training with the plateau schedule.
// In single-pass mode every sample contributes exactly one gradient step.
template <typename T>
TrainingLog pretrain(AutoencoderModel<T>& ae, BatchSource<T>& stream, const PretrainConfig& cfg,
                     BatchSource<T>* validation = nullptr) {
    cfg.validate();
    auto rng = make_rng(cfg.seed);
    auto params = ae.params();
    MomentumSGD<T> opt(cfg.initial_lr, cfg.momentum);

    std::size_t limit = cfg.max_samples;
    if (cfg.single_pass) {
        if (stream.size() == 0)
            throw std::invalid_argument("pretrain: single_pass needs a bounded stream");
        limit = limit ? std::min(limit, stream.size()) : stream.size();
    } else if (limit == 0) {
        throw std::invalid_argument("pretrain: max_samples required unless single_pass");
    }

    TrainingLog log;
    std::vector<double> window_losses;  // plateau window, reset after each decay
    double lr = cfg.initial_lr;
    double interval_loss = 0.0;
    std::size_t interval_samples = 0;
    std::size_t seen = 0;
    std::size_t cursor = 0;

    while (seen < limit) {
        const std::size_t want = std::min(cfg.batch_size, limit - seen);
        std::size_t take = want;
        if (stream.size() > 0) {
            if (cursor >= stream.size()) cursor = 0;  // wrap (multi-epoch mode)
            take = std::min(want, stream.size() - cursor);
        }
        Tensor<T> x = stream.batch(cursor, take);
        cursor += take;
        Tensor<T> input = augment(x, cfg.augmentation, rng);
        Tensor<T> y = ae.reconstruct(input);
        const double loss = mean_squared_error(input, y);
        if (!std::isfinite(loss)) throw PretrainAbort(lr, seen);

        Tensor<T> dy = Tensor<T>::zeros_like(y);
        const double scale = 2.0 / static_cast<double>(y.size());
        for (std::size_t i = 0; i < y.size(); ++i)
            dy[i] = static_cast<T>(scale * (static_cast<double>(y[i]) - input[i]));
        MomentumSGD<T>::zero_grads(params);
        ae.backward(dy);
        opt.set_lr(lr);
        opt.step(params);

        seen += take;
        interval_loss += loss * static_cast<double>(take);
        interval_samples += take;

        if (interval_samples >= cfg.check_interval || seen >= limit) {
            const double mean_loss = interval_loss / static_cast<double>(interval_samples);
            window_losses.push_back(mean_loss);
            const double new_lr =
                plateau_schedule(window_losses, lr, cfg.decay_factor, cfg.patience_checks);
            if (new_lr != lr) window_losses.clear();
            lr = new_lr;
            TrainingCheck check;
            check.samples_seen = seen;
            check.loss = mean_loss;
            check.lr = lr;
            if (validation) check.val_loss = reconstruction_mse(ae, *validation);
            log.checks.push_back(check);
            interval_loss = 0.0;
            interval_samples = 0;
        }
    }
    return log;
}

}  // namespace sigquant
