#include "sigquant/infometrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace sigquant {
namespace info {

std::vector<int> quantize(const Image& batch, std::size_t sample, int bins) {
    if (bins < 1) throw std::invalid_argument("quantize: bins must be >= 1");
    const std::size_t H = batch.h(), W = batch.w(), C = batch.c();
    std::vector<int> labels(H * W);
    for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j) {
            double y;
            if (C >= 3) {
                y = 0.299 * batch.at(sample, 0, i, j) + 0.587 * batch.at(sample, 1, i, j) +
                    0.114 * batch.at(sample, 2, i, j);
            } else {
                y = batch.at(sample, 0, i, j);
            }
            int q = static_cast<int>(y * bins);
            q = std::max(0, std::min(bins - 1, q));
            labels[i * W + j] = q;
        }
    return labels;
}

std::vector<double> JointHistogram::marginal_rows() const {
    std::vector<double> m(bins, 0.0);
    for (int p = 0; p < bins; ++p)
        for (int q = 0; q < bins; ++q) m[p] += at(p, q);
    return m;
}

std::vector<double> JointHistogram::marginal_cols() const {
    std::vector<double> m(bins, 0.0);
    for (int p = 0; p < bins; ++p)
        for (int q = 0; q < bins; ++q) m[q] += at(p, q);
    return m;
}

JointHistogram joint_histogram(const Image& a, std::size_t sa, const Image& b, std::size_t sb,
                               int bins) {
    if (a.h() != b.h() || a.w() != b.w())
        throw std::invalid_argument("joint_histogram: shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    const auto la = quantize(a, sa, bins);
    const auto lb = quantize(b, sb, bins);
    JointHistogram h;
    h.bins = bins;
    h.counts.assign(static_cast<std::size_t>(bins) * bins, 0.0);
    for (std::size_t i = 0; i < la.size(); ++i) h.at(la[i], lb[i]) += 1.0;
    h.total = static_cast<double>(la.size());
    return h;
}

double entropy(const std::vector<double>& counts) {
    double total = 0.0;
    for (double c : counts) total += c;
    if (total <= 0.0) return 0.0;
    double h = 0.0;
    for (double c : counts) {
        if (c <= 0.0) continue;
        const double p = c / total;
        h -= p * std::log2(p);
    }
    return h;
}

double mutual_information(const JointHistogram& joint) {
    const double hx = entropy(joint.marginal_rows());
    const double hy = entropy(joint.marginal_cols());
    const double hxy = entropy(joint.counts);
    const double i = hx + hy - hxy;
    return i < 0.0 ? 0.0 : i;
}

double nmi(const Image& a, std::size_t sa, const Image& b, std::size_t sb, int bins) {
    const JointHistogram joint = joint_histogram(a, sa, b, sb, bins);
    const double hx = entropy(joint.marginal_rows());
    const double hy = entropy(joint.marginal_cols());
    if (hx == 0.0 || hy == 0.0) return 0.0;  // constant image convention
    const double v = mutual_information(joint) / std::sqrt(hx * hy);
    return std::min(1.0, std::max(0.0, v));
}

double nmi(const Image& a, const Image& b, int bins) { return nmi(a, 0, b, 0, bins); }

namespace {

struct Welford {
    std::size_t n = 0;
    double mean = 0.0;
    double m2 = 0.0;
    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double stddev() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n)) : 0.0; }
};

}  // namespace

NMIReport intra_nmi(const ReconstructFn& reconstruct, const Image& dataset, int bins,
                    std::size_t batch_size) {
    Welford acc;
    const std::size_t n = dataset.n();
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t count = std::min(batch_size, n - start);
        Image x = dataset.slice_n(start, count);
        Image y = reconstruct(x);
        for (std::size_t i = 0; i < count; ++i) acc.add(nmi(x, i, y, i, bins));
    }
    NMIReport r;
    r.mode = "intra";
    r.mean = acc.mean;
    r.stddev = acc.stddev();
    r.count = acc.n;
    return r;
}

NMIReport inter_nmi(const ReconstructFn& reconstruct, const Image& dataset, int bins,
                    std::size_t batch_size) {
    Welford acc;
    const std::size_t pairs = dataset.n() / 2;
    // keep batch boundaries aligned to pairs
    const std::size_t step = std::max<std::size_t>(2, batch_size - batch_size % 2);
    for (std::size_t start = 0; start + 1 < 2 * pairs; start += step) {
        const std::size_t count = std::min(step, 2 * pairs - start);
        Image x = dataset.slice_n(start, count);
        Image y = reconstruct(x);
        for (std::size_t i = 0; i + 1 < count; i += 2) acc.add(nmi(y, i, y, i + 1, bins));
    }
    NMIReport r;
    r.mode = "inter";
    r.mean = acc.mean;
    r.stddev = acc.stddev();
    r.count = acc.n;
    return r;
}

// --- CIELAB ------------------------------------------------------------

namespace {

constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;  // D65

double srgb_to_linear(double c) {
    return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}
double linear_to_srgb(double c) {
    return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}
double lab_f(double t) {
    constexpr double d3 = (6.0 / 29.0) * (6.0 / 29.0) * (6.0 / 29.0);
    return t > d3 ? std::cbrt(t) : t / (3.0 * (6.0 / 29.0) * (6.0 / 29.0)) + 4.0 / 29.0;
}
double lab_finv(double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d ? t * t * t : 3.0 * d * d * (t - 4.0 / 29.0);
}

}  // namespace

Image rgb_to_lab(const Image& rgb) {
    if (rgb.c() != 3) throw std::invalid_argument("rgb_to_lab: expected 3 channels");
    Image out = Image(rgb.n(), 3, rgb.h(), rgb.w());
    for (std::size_t n = 0; n < rgb.n(); ++n)
        for (std::size_t i = 0; i < rgb.h(); ++i)
            for (std::size_t j = 0; j < rgb.w(); ++j) {
                const double r = srgb_to_linear(rgb.at(n, 0, i, j));
                const double g = srgb_to_linear(rgb.at(n, 1, i, j));
                const double b = srgb_to_linear(rgb.at(n, 2, i, j));
                const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
                const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
                const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
                const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
                out.at(n, 0, i, j) = static_cast<float>(116.0 * fy - 16.0);
                out.at(n, 1, i, j) = static_cast<float>(500.0 * (fx - fy));
                out.at(n, 2, i, j) = static_cast<float>(200.0 * (fy - fz));
            }
    return out;
}

Image lab_to_rgb(const Image& lab) {
    if (lab.c() != 3) throw std::invalid_argument("lab_to_rgb: expected 3 channels");
    Image out = Image(lab.n(), 3, lab.h(), lab.w());
    for (std::size_t n = 0; n < lab.n(); ++n)
        for (std::size_t i = 0; i < lab.h(); ++i)
            for (std::size_t j = 0; j < lab.w(); ++j) {
                const double L = lab.at(n, 0, i, j);
                const double a = lab.at(n, 1, i, j);
                const double b = lab.at(n, 2, i, j);
                const double fy = (L + 16.0) / 116.0;
                const double fx = fy + a / 500.0;
                const double fz = fy - b / 200.0;
                const double x = kXn * lab_finv(fx);
                const double y = kYn * lab_finv(fy);
                const double z = kZn * lab_finv(fz);
                const double rl = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
                const double gl = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
                const double bl = -0.5556434 * x - 0.2040259 * y + 1.0572252 * z;
                auto clamp01 = [](double v) { return std::min(1.0, std::max(0.0, v)); };
                out.at(n, 0, i, j) = static_cast<float>(clamp01(linear_to_srgb(rl)));
                out.at(n, 1, i, j) = static_cast<float>(clamp01(linear_to_srgb(gl)));
                out.at(n, 2, i, j) = static_cast<float>(clamp01(linear_to_srgb(bl)));
            }
    return out;
}

void LabHistogram::to_csv(std::ostream& os) const {
    os << "channel,bin_low,bin_high,count\n";
    const char* names[3] = {"L", "A", "B"};
    for (int c = 0; c < 3; ++c) {
        const auto [lo, hi] = ranges[c];
        const double width = (hi - lo) / bins;
        for (int b = 0; b < bins; ++b)
            os << names[c] << "," << lo + b * width << "," << lo + (b + 1) * width << ","
               << counts[c][b] << "\n";
    }
}

void LabHistogram::save_csv(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write lab histogram: " + path);
    to_csv(f);
}

LabHistogram lab_channel_histograms(const Image& rgb, std::size_t sample, int bins) {
    Image one = rgb.slice_n(sample, 1);
    Image lab = rgb_to_lab(one);
    LabHistogram h;
    h.bins = bins;
    h.ranges = {std::pair{0.0, 100.0}, std::pair{-128.0, 127.0}, std::pair{-128.0, 127.0}};
    for (int c = 0; c < 3; ++c) {
        h.counts[c].assign(bins, 0.0);
        const auto [lo, hi] = h.ranges[c];
        for (std::size_t i = 0; i < lab.h(); ++i)
            for (std::size_t j = 0; j < lab.w(); ++j) {
                const double v = lab.at(0, c, i, j);
                int b = static_cast<int>((v - lo) / (hi - lo) * bins);
                b = std::max(0, std::min(bins - 1, b));
                h.counts[c][b] += 1.0;
            }
    }
    return h;
}

}  // namespace info
}  // namespace sigquant
