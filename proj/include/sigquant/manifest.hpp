#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigquant/dataset.hpp"
#include "sigquant/finetune.hpp"
#include "sigquant/modelzoo.hpp"
#include "sigquant/pretrain.hpp"

namespace sigquant {

struct DatasetSection {
    std::string name = "synthetic-stripes";
    int height = 32;
    int width = 32;
    SplitRange pretrain_split{0, 0};
    SplitRange classifier_split{0, 0};
    SplitRange eval_split{0, 0};
};

struct ClassifierTrainSection {
    double learning_rate = 0.01;
    double momentum = 0.9;
    int epochs = 1;
    int batch_size = 16;
};

struct EvaluationSection {
    int top_k = 1;
    std::vector<double> noise_strengths = {0.0, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<double> fca_thresholds = {0.1, 0.2, 0.8, 0.9};
    int nmi_bins = 64;
    int nmi_max_images = 256;
    bool identity_denominator = false;
};

struct ExperimentManifest {
    std::string name;
    std::uint64_t seed = 1;
    DatasetSection dataset;
    std::vector<ArchitectureSpec> classifiers;
    ArchitectureSpec autoencoder;
    ClassifierTrainSection classifier_training;
    PretrainConfig pretrain;
    FinetuneConfig finetune;
    EvaluationSection evaluation;
};

nlohmann::json manifest_to_json(const ExperimentManifest& m);
ExperimentManifest manifest_from_json(const nlohmann::json& j);
ExperimentManifest load_manifest(const std::string& path);

// Returns every violation found, not just the first one. Empty = valid.
std::vector<std::string> validate_manifest(const ExperimentManifest& m);

// Stable content digest of the serialized manifest, hex string.
std::string manifest_digest(const ExperimentManifest& m);

}  // namespace sigquant
