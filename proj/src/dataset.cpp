#include "sigquant/dataset.hpp"

#include <cmath>

#include "sigquant/rng.hpp"

namespace sigquant {

void SyntheticStripesDataset::render(std::size_t index, Tensor<float>& batch,
                                     std::size_t slot) const {
    auto rng = make_rng(mix64(seed_ ^ (0x5151e7 + index * 0x9e3779b97f4a7c15ULL)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const int cls = label(index);
    const double theta = (cls % 5) * (M_PI / 5.0) + 0.12;           // 5 orientations
    const double freq = (cls < 5) ? 3.0 : 7.0;                      // 2 frequency bands
    const double phase = unit(rng) * 2.0 * M_PI;
    const double cs = std::cos(theta), sn = std::sin(theta);

    double bg0[3], bg1[3];
    for (int c = 0; c < 3; ++c) {
        bg0[c] = 0.15 + 0.7 * unit(rng);
        bg1[c] = 0.15 + 0.7 * unit(rng);
    }
    std::uniform_real_distribution<double> pix_noise(-0.03, 0.03);

    const double H = static_cast<double>(height_), W = static_cast<double>(width_);
    for (std::size_t i = 0; i < height_; ++i)
        for (std::size_t j = 0; j < width_; ++j) {
            const double t = (static_cast<double>(i) + static_cast<double>(j)) / (H + W - 2.0);
            const double u = (cs * static_cast<double>(i) + sn * static_cast<double>(j)) / H;
            const double stripe = 0.25 * std::sin(2.0 * M_PI * freq * u + phase);
            for (int c = 0; c < 3; ++c) {
                double v = bg0[c] * (1.0 - t) + bg1[c] * t + stripe + pix_noise(rng);
                v = std::min(1.0, std::max(0.0, v));
                batch.at(slot, static_cast<std::size_t>(c), i, j) = static_cast<float>(v);
            }
        }
}

}  // namespace sigquant
