#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigquant/tensor.hpp"

namespace sigquant {
namespace info {

using Image = Tensor<float>;

// Luminance projection of one sample, uniformly quantized over [0,1] into
// {0,...,bins-1}; the value 1.0 lands in the top bin.
std::vector<int> quantize(const Image& batch, std::size_t sample, int bins);

struct JointHistogram {
    int bins = 0;
    std::vector<double> counts;  // bins x bins, row = first image
    double total = 0.0;

    double& at(int p, int q) { return counts[static_cast<std::size_t>(p) * bins + q]; }
    double at(int p, int q) const { return counts[static_cast<std::size_t>(p) * bins + q]; }
    std::vector<double> marginal_rows() const;
    std::vector<double> marginal_cols() const;
};

JointHistogram joint_histogram(const Image& a, std::size_t sa, const Image& b, std::size_t sb,
                               int bins);

// Shannon entropy in bits of a count vector; 0 log 0 := 0.
double entropy(const std::vector<double>& counts);

// I = H(X) + H(Y) - H(X,Y); tiny negative float residue clamps to 0.
double mutual_information(const JointHistogram& joint);

// I(X;Y) / sqrt(H(X) H(Y)); 0 when either image is constant; clamped to
// [0,1].
double nmi(const Image& a, std::size_t sa, const Image& b, std::size_t sb, int bins);
double nmi(const Image& a, const Image& b, int bins);  // single-sample batches

struct NMIReport {
    std::string mode;  // "intra" or "inter"
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;

    nlohmann::json to_json() const {
        return {{"mode", mode}, {"mean", mean}, {"stddev", stddev}, {"count", count}};
    }
};

using ReconstructFn = std::function<Image(const Image&)>;

// nMI(x, AE(x)) over every sample of the evaluation set.
NMIReport intra_nmi(const ReconstructFn& reconstruct, const Image& dataset, int bins,
                    std::size_t batch_size = 32);

// nMI(AE(x_2k), AE(x_2k+1)) over consecutive sample pairs; floor(N/2) pairs.
NMIReport inter_nmi(const ReconstructFn& reconstruct, const Image& dataset, int bins,
                    std::size_t batch_size = 32);

// sRGB (in [0,1]) <-> CIELAB under a D65 white point. LAB channels keep
// their native ranges (L in [0,100], a/b roughly [-128,127]).
Image rgb_to_lab(const Image& rgb);
Image lab_to_rgb(const Image& lab);

struct LabHistogram {
    int bins = 0;
    std::array<std::vector<double>, 3> counts;            // L, A, B
    std::array<std::pair<double, double>, 3> ranges;      // fixed canonical ranges

    void to_csv(std::ostream& os) const;
    void save_csv(const std::string& path) const;
};

LabHistogram lab_channel_histograms(const Image& rgb, std::size_t sample, int bins);

}  // namespace info
}  // namespace sigquant
