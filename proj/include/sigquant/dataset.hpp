#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sigquant/finetune.hpp"
#include "sigquant/pretrain.hpp"
#include "sigquant/tensor.hpp"

namespace sigquant {

// Procedural 10-class image set: class = stripe orientation (5 options)
// x spatial frequency (2 options), drawn over a random smooth color
// background with mild pixel noise. Every sample is a pure function of
// (seed, index), so splits are just index ranges.
class SyntheticStripesDataset {
  public:
    SyntheticStripesDataset(std::uint64_t seed, std::size_t height = 32, std::size_t width = 32)
        : seed_(seed), height_(height), width_(width) {}

    static constexpr int kClassCount = 10;

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    int label(std::size_t index) const { return static_cast<int>(index % kClassCount); }

    void render(std::size_t index, Tensor<float>& batch, std::size_t slot) const;

    Tensor<float> images(std::size_t begin, std::size_t count) const {
        Tensor<float> out(count, 3, height_, width_);
        for (std::size_t i = 0; i < count; ++i) render(begin + i, out, i);
        return out;
    }
    std::vector<int> labels(std::size_t begin, std::size_t count) const {
        std::vector<int> out(count);
        for (std::size_t i = 0; i < count; ++i) out[i] = label(begin + i);
        return out;
    }

  private:
    std::uint64_t seed_;
    std::size_t height_, width_;
};

struct SplitRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
    bool overlaps(const SplitRange& o) const { return begin < o.end && o.begin < end; }
};

class UnlabeledSplit final : public BatchSource<float> {
  public:
    UnlabeledSplit(const SyntheticStripesDataset& ds, SplitRange split) : ds_(&ds), split_(split) {}
    std::size_t size() const override { return split_.size(); }
    Tensor<float> batch(std::size_t start, std::size_t count) override {
        return ds_->images(split_.begin + start, count);
    }

  private:
    const SyntheticStripesDataset* ds_;
    SplitRange split_;
};

class LabeledSplit final : public LabeledBatchSource<float> {
  public:
    LabeledSplit(const SyntheticStripesDataset& ds, SplitRange split) : ds_(&ds), split_(split) {}
    std::size_t size() const override { return split_.size(); }
    std::pair<Tensor<float>, std::vector<int>> batch(std::size_t start,
                                                     std::size_t count) override {
        return {ds_->images(split_.begin + start, count), ds_->labels(split_.begin + start, count)};
    }

  private:
    const SyntheticStripesDataset* ds_;
    SplitRange split_;
};

}  // namespace sigquant
