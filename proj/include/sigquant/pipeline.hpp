#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sigquant/layers.hpp"
#include "sigquant/manifest.hpp"
#include "sigquant/modelzoo.hpp"

namespace sigquant {

// Ordered stage names executed by run_pipeline.
const std::vector<std::string>& pipeline_stages();

struct RunOptions {
    std::string out_dir = "runs";
    std::uint64_t seed_override = 0;  // 0 = use the manifest seed
    bool resume = false;
    std::string stop_after;  // empty = run everything
};

struct RunResult {
    std::string run_dir;
    nlohmann::json record;  // contents of run.json
};

// Executes the staged pipeline, writing artifacts and run.json under
// <out_dir>/<manifest digest>/.
RunResult run_pipeline(const ExperimentManifest& manifest, const RunOptions& opts);

// Momentum-SGD cross-entropy training for one classifier; returns the
// final top-1 accuracy on the training split.
template <typename T>
double train_classifier(ClassifierModel<T>& model, LabeledBatchSource<T>& data,
                        const ClassifierTrainSection& cfg) {
    MomentumSGD<T> opt(static_cast<T>(cfg.learning_rate), static_cast<T>(cfg.momentum));
    auto params = model.params();
    const std::size_t n = data.size();
    if (n == 0) throw std::invalid_argument("train_classifier: empty dataset");
    const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < n; start += bs) {
            const std::size_t count = std::min(bs, n - start);
            auto [x, labels] = data.batch(start, count);
            Tensor<T> logits = model.forward(x, true);
            auto [loss, dlogits] = cross_entropy_loss(logits, labels);
            if (!std::isfinite(loss))
                throw std::runtime_error("train_classifier: non-finite loss");
            MomentumSGD<T>::zero_grads(params);
            model.backward(dlogits);
            opt.step(params);
        }
    }
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += bs) {
        const std::size_t count = std::min(bs, n - start);
        auto [x, labels] = data.batch(start, count);
        Tensor<T> logits = model.forward(x, false);
        const std::size_t k = logits.c();
        for (std::size_t i = 0; i < count; ++i) {
            std::size_t arg = 0;
            for (std::size_t c = 1; c < k; ++c)
                if (logits[i * k + c] > logits[i * k + arg]) arg = c;
            if (static_cast<int>(arg) == labels[i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

}  // namespace sigquant
