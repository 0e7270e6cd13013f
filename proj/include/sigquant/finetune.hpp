#pragma once

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sigquant/modelzoo.hpp"
#include "sigquant/pretrain.hpp"

namespace sigquant {

// Breach of a frozen-state or partition invariant. Mapped to exit code 2
// by the CLI.
struct InvariantBreach : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class UpdateTarget { Decoder, Encoder, Both };

inline std::string update_target_name(UpdateTarget t) {
    switch (t) {
        case UpdateTarget::Decoder: return "decoder";
        case UpdateTarget::Encoder: return "encoder";
        case UpdateTarget::Both: return "both";
    }
    return "?";
}

inline UpdateTarget update_target_from_name(const std::string& s) {
    if (s == "decoder") return UpdateTarget::Decoder;
    if (s == "encoder") return UpdateTarget::Encoder;
    if (s == "both") return UpdateTarget::Both;
    throw std::invalid_argument("unknown update target: " + s);
}

struct FinetuneConfig {
    UpdateTarget update_target = UpdateTarget::Decoder;
    double lr = 0.001;
    double momentum = 0.9;
    std::size_t epochs = 1;
    std::size_t batch_size = 16;
    std::uint64_t seed = 1;
};

template <typename T>
struct LabeledBatchSource {
    virtual ~LabeledBatchSource() = default;
    virtual std::size_t size() const = 0;
    virtual std::pair<Tensor<T>, std::vector<int>> batch(std::size_t start,
                                                         std::size_t count) = 0;
};

// Frozen classifier attached behind an AE. The classifier checksum taken at
// attach time must hold for the coupled model's entire lifetime.
template <typename T>
class CoupledModel {
  public:
    CoupledModel(AutoencoderModel<T>& ae, ClassifierModel<T>& classifier)
        : ae_(&ae), classifier_(&classifier) {
        if (!classifier.frozen())
            throw std::invalid_argument("CoupledModel: classifier must be frozen");
        attach_checksum_ = classifier.checksum();
    }

    AutoencoderModel<T>& ae() { return *ae_; }
    ClassifierModel<T>& classifier() { return *classifier_; }
    Digest attach_checksum() const { return attach_checksum_; }

    void verify_classifier() {
        if (classifier_->checksum() != attach_checksum_)
            throw InvariantBreach("classifier parameter drift detected (" +
                                  classifier_->spec().name + ")");
    }

  private:
    AutoencoderModel<T>* ae_;
    ClassifierModel<T>* classifier_;
    Digest attach_checksum_;
};

template <typename T>
Tensor<T> coupled_forward(CoupledModel<T>& cm, const Tensor<T>& x) {
    Tensor<T> recon = cm.ae().reconstruct(x);
    return cm.classifier().forward(recon);
}

// Backward matching the last coupled_forward; accumulates AE gradients and
// returns d(loss)/d(input).
template <typename T>
Tensor<T> coupled_backward(CoupledModel<T>& cm, const Tensor<T>& dlogits) {
    Tensor<T> drecon = cm.classifier().backward(dlogits);
    return cm.ae().backward(drecon);
}

template <typename T>
double top1_accuracy_coupled(CoupledModel<T>& cm, LabeledBatchSource<T>& data,
                             std::size_t batch_size = 32) {
    std::size_t correct = 0, total = 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
        const std::size_t count = std::min(batch_size, data.size() - start);
        auto [x, labels] = data.batch(start, count);
        Tensor<T> logits = coupled_forward(cm, x);
        const std::size_t k = logits.c();
        for (std::size_t n = 0; n < count; ++n) {
            std::size_t arg = 0;
            for (std::size_t i = 1; i < k; ++i)
                if (logits[n * k + i] > logits[n * k + arg]) arg = i;
            if (static_cast<int>(arg) == labels[n]) ++correct;
        }
        total += count;
    }
    return total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

// Cross-entropy fine-tuning of the configured AE partition through the
// frozen classifier. The complement partition and the classifier are
// byte-identical afterwards; any classifier delta is a hard failure.
template <typename T>
void finetune(CoupledModel<T>& cm, LabeledBatchSource<T>& data, const FinetuneConfig& cfg,
              std::size_t max_steps = 0) {
    auto& ae = cm.ae();
    std::vector<Param<T>*> target;
    switch (cfg.update_target) {
        case UpdateTarget::Decoder: target = ae.decoder_params(); break;
        case UpdateTarget::Encoder: target = ae.encoder_params(); break;
        case UpdateTarget::Both: target = ae.params(); break;
    }
    auto all = ae.params();
    MomentumSGD<T> opt(cfg.lr, cfg.momentum);
    const std::size_t n = data.size();
    if (n == 0) throw std::invalid_argument("finetune: empty dataset");

    std::size_t steps = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            auto [x, labels] = data.batch(start, count);
            Tensor<T> logits = coupled_forward(cm, x);
            auto [loss, dlogits] = cross_entropy_loss(logits, labels);
            if (!std::isfinite(loss))
                throw std::runtime_error("finetune: non-finite loss at step " +
                                         std::to_string(steps));
            MomentumSGD<T>::zero_grads(all);
            coupled_backward(cm, dlogits);
            opt.step(target);
            ++steps;
            if (max_steps && steps >= max_steps) {
                cm.verify_classifier();
                return;
            }
        }
        cm.verify_classifier();
    }
    cm.verify_classifier();
}

struct AblationRow {
    UpdateTarget target;
    double top1 = 0.0;
    Digest initial_checksum = 0;
};

// Runs the three-way encoder/decoder/both comparison from one pre-trained
// checkpoint and seed; reports validation top-1 per branch.
template <typename T>
std::vector<AblationRow> ablate_update_target(AutoencoderModel<T>& pretrained,
                                              ClassifierModel<T>& classifier,
                                              LabeledBatchSource<T>& train,
                                              LabeledBatchSource<T>& validation,
                                              FinetuneConfig cfg) {
    std::vector<AblationRow> report;
    for (UpdateTarget t : {UpdateTarget::Encoder, UpdateTarget::Decoder, UpdateTarget::Both}) {
        AutoencoderModel<T> branch = pretrained.clone();
        AblationRow row;
        row.target = t;
        row.initial_checksum = branch.checksum();
        cfg.update_target = t;
        CoupledModel<T> cm(branch, classifier);
        finetune(cm, train, cfg);
        row.top1 = top1_accuracy_coupled(cm, validation);
        report.push_back(row);
    }
    return report;
}

}  // namespace sigquant
