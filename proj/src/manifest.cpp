#include "sigquant/manifest.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sigquant/rng.hpp"

namespace sigquant {

namespace {

using nlohmann::json;

json augment_to_json(const AugmentConfig& a) {
    return json{{"scale", a.scale},
                {"rotation", a.rotation},
                {"shift", a.shift},
                {"noise", a.noise},
                {"blur", a.blur},
                {"brightness", a.brightness},
                {"contrast", a.contrast},
                {"color", a.color},
                {"mirror", a.mirror},
                {"scale_range", a.scale_range},
                {"rotation_deg", a.rotation_deg},
                {"shift_max", a.shift_max},
                {"noise_amp", a.noise_amp},
                {"blur_prob", a.blur_prob},
                {"brightness_delta", a.brightness_delta},
                {"contrast_range", a.contrast_range},
                {"color_range", a.color_range},
                {"mirror_prob", a.mirror_prob}};
}

AugmentConfig augment_from_json(const json& j) {
    AugmentConfig a;
    a.scale = j.value("scale", false);
    a.rotation = j.value("rotation", false);
    a.shift = j.value("shift", false);
    a.noise = j.value("noise", false);
    a.blur = j.value("blur", false);
    a.brightness = j.value("brightness", false);
    a.contrast = j.value("contrast", false);
    a.color = j.value("color", false);
    a.mirror = j.value("mirror", false);
    a.scale_range = j.value("scale_range", a.scale_range);
    a.rotation_deg = j.value("rotation_deg", a.rotation_deg);
    a.shift_max = j.value("shift_max", a.shift_max);
    a.noise_amp = j.value("noise_amp", a.noise_amp);
    a.blur_prob = j.value("blur_prob", a.blur_prob);
    a.brightness_delta = j.value("brightness_delta", a.brightness_delta);
    a.contrast_range = j.value("contrast_range", a.contrast_range);
    a.color_range = j.value("color_range", a.color_range);
    a.mirror_prob = j.value("mirror_prob", a.mirror_prob);
    return a;
}

json split_to_json(const SplitRange& s) {
    return json{{"begin", s.begin}, {"end", s.end}};
}

SplitRange split_from_json(const json& j) {
    return SplitRange{j.at("begin").get<std::size_t>(), j.at("end").get<std::size_t>()};
}

}  // namespace

json manifest_to_json(const ExperimentManifest& m) {
    json j;
    j["name"] = m.name;
    j["seed"] = m.seed;
    j["dataset"] = json{{"name", m.dataset.name},
                        {"height", m.dataset.height},
                        {"width", m.dataset.width},
                        {"pretrain_split", split_to_json(m.dataset.pretrain_split)},
                        {"classifier_split", split_to_json(m.dataset.classifier_split)},
                        {"eval_split", split_to_json(m.dataset.eval_split)}};
    j["classifiers"] = json::array();
    for (const auto& c : m.classifiers) j["classifiers"].push_back(c.to_json());
    j["autoencoder"] = m.autoencoder.to_json();
    j["classifier_training"] = json{{"learning_rate", m.classifier_training.learning_rate},
                                    {"momentum", m.classifier_training.momentum},
                                    {"epochs", m.classifier_training.epochs},
                                    {"batch_size", m.classifier_training.batch_size}};
    j["pretrain"] = json{{"initial_lr", m.pretrain.initial_lr},
                         {"momentum", m.pretrain.momentum},
                         {"decay_factor", m.pretrain.decay_factor},
                         {"patience_checks", m.pretrain.patience_checks},
                         {"check_interval", m.pretrain.check_interval},
                         {"max_samples", m.pretrain.max_samples},
                         {"single_pass", m.pretrain.single_pass},
                         {"batch_size", m.pretrain.batch_size},
                         {"augmentation", augment_to_json(m.pretrain.augmentation)}};
    j["finetune"] = json{{"update_target", update_target_name(m.finetune.update_target)},
                         {"lr", m.finetune.lr},
                         {"momentum", m.finetune.momentum},
                         {"epochs", m.finetune.epochs},
                         {"batch_size", m.finetune.batch_size}};
    j["evaluation"] = json{{"top_k", m.evaluation.top_k},
                           {"noise_strengths", m.evaluation.noise_strengths},
                           {"fca_thresholds", m.evaluation.fca_thresholds},
                           {"nmi_bins", m.evaluation.nmi_bins},
                           {"nmi_max_images", m.evaluation.nmi_max_images},
                           {"identity_denominator", m.evaluation.identity_denominator}};
    return j;
}

ExperimentManifest manifest_from_json(const json& j) {
    ExperimentManifest m;
    m.name = j.at("name").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const json& d = j.at("dataset");
    m.dataset.name = d.value("name", m.dataset.name);
    m.dataset.height = d.value("height", m.dataset.height);
    m.dataset.width = d.value("width", m.dataset.width);
    m.dataset.pretrain_split = split_from_json(d.at("pretrain_split"));
    m.dataset.classifier_split = split_from_json(d.at("classifier_split"));
    m.dataset.eval_split = split_from_json(d.at("eval_split"));
    m.classifiers.clear();
    for (const auto& c : j.at("classifiers")) m.classifiers.push_back(ArchitectureSpec::from_json(c));
    m.autoencoder = ArchitectureSpec::from_json(j.at("autoencoder"));
    if (j.contains("classifier_training")) {
        const json& t = j["classifier_training"];
        m.classifier_training.learning_rate = t.value("learning_rate", 0.01);
        m.classifier_training.momentum = t.value("momentum", 0.9);
        m.classifier_training.epochs = t.value("epochs", 1);
        m.classifier_training.batch_size = t.value("batch_size", 16);
    }
    const json& p = j.at("pretrain");
    m.pretrain.initial_lr = p.value("initial_lr", m.pretrain.initial_lr);
    m.pretrain.momentum = p.value("momentum", m.pretrain.momentum);
    m.pretrain.decay_factor = p.value("decay_factor", m.pretrain.decay_factor);
    m.pretrain.patience_checks = p.value("patience_checks", m.pretrain.patience_checks);
    m.pretrain.check_interval = p.value("check_interval", m.pretrain.check_interval);
    m.pretrain.max_samples = p.value("max_samples", m.pretrain.max_samples);
    m.pretrain.single_pass = p.value("single_pass", m.pretrain.single_pass);
    m.pretrain.batch_size = p.value("batch_size", m.pretrain.batch_size);
    if (p.contains("augmentation")) m.pretrain.augmentation = augment_from_json(p["augmentation"]);
    const json& f = j.at("finetune");
    m.finetune.update_target =
        update_target_from_name(f.value("update_target", std::string("decoder")));
    m.finetune.lr = f.value("lr", m.finetune.lr);
    m.finetune.momentum = f.value("momentum", m.finetune.momentum);
    m.finetune.epochs = f.value("epochs", m.finetune.epochs);
    m.finetune.batch_size = f.value("batch_size", m.finetune.batch_size);
    if (j.contains("evaluation")) {
        const json& e = j["evaluation"];
        m.evaluation.top_k = e.value("top_k", m.evaluation.top_k);
        m.evaluation.noise_strengths =
            e.value("noise_strengths", m.evaluation.noise_strengths);
        m.evaluation.fca_thresholds = e.value("fca_thresholds", m.evaluation.fca_thresholds);
        m.evaluation.nmi_bins = e.value("nmi_bins", m.evaluation.nmi_bins);
        m.evaluation.nmi_max_images = e.value("nmi_max_images", m.evaluation.nmi_max_images);
        m.evaluation.identity_denominator =
            e.value("identity_denominator", m.evaluation.identity_denominator);
    }
    return m;
}

ExperimentManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open manifest: " + path);
    json j;
    in >> j;
    return manifest_from_json(j);
}

std::vector<std::string> validate_manifest(const ExperimentManifest& m) {
    std::vector<std::string> errs;
    auto add = [&](std::string s) { errs.push_back(std::move(s)); };

    if (m.name.empty()) add("name: must be non-empty");
    if (m.seed == 0) add("seed: must be positive");
    if (m.dataset.height <= 0 || m.dataset.width <= 0)
        add("dataset: height and width must be positive");

    auto check_split = [&](const char* label, const SplitRange& s) {
        if (s.end <= s.begin)
            add(std::string("dataset.") + label + ": end must be greater than begin");
    };
    check_split("pretrain_split", m.dataset.pretrain_split);
    check_split("classifier_split", m.dataset.classifier_split);
    check_split("eval_split", m.dataset.eval_split);
    if (m.dataset.pretrain_split.overlaps(m.dataset.eval_split))
        add("dataset: pretrain_split overlaps eval_split");
    if (m.dataset.classifier_split.overlaps(m.dataset.eval_split))
        add("dataset: classifier_split overlaps eval_split");

    if (m.classifiers.empty()) add("classifiers: at least one classifier is required");
    std::set<std::string> names;
    for (const auto& c : m.classifiers) {
        if (!names.insert(c.name).second)
            add("classifiers: duplicate name '" + c.name + "'");
        if (c.family == Family::AeSegnet)
            add("classifiers: '" + c.name + "' uses the autoencoder family");
        try {
            c.validate();
        } catch (const std::exception& e) {
            add("classifiers: '" + c.name + "': " + e.what());
        }
        if (c.height != static_cast<std::size_t>(m.dataset.height) || c.width != static_cast<std::size_t>(m.dataset.width))
            add("classifiers: '" + c.name + "' input shape does not match dataset");
    }
    if (m.autoencoder.family != Family::AeSegnet)
        add("autoencoder: family must be ae-segnet");
    try {
        m.autoencoder.validate();
    } catch (const std::exception& e) {
        add(std::string("autoencoder: ") + e.what());
    }
    if (m.autoencoder.height != static_cast<std::size_t>(m.dataset.height) || m.autoencoder.width != static_cast<std::size_t>(m.dataset.width))
        add("autoencoder: input shape does not match dataset");

    if (m.classifier_training.learning_rate <= 0.0)
        add("classifier_training.learning_rate: must be positive");
    if (m.classifier_training.epochs < 1) add("classifier_training.epochs: must be >= 1");
    if (m.classifier_training.batch_size < 1)
        add("classifier_training.batch_size: must be >= 1");

    try {
        m.pretrain.validate();
    } catch (const std::exception& e) {
        add(e.what());
    }
    if (m.pretrain.initial_lr <= 0.0) add("pretrain.initial_lr: must be positive");
    if (m.pretrain.batch_size < 1) add("pretrain.batch_size: must be >= 1");

    if (m.finetune.lr <= 0.0) add("finetune.lr: must be positive");
    if (m.finetune.epochs < 1) add("finetune.epochs: must be >= 1");
    if (m.finetune.batch_size < 1) add("finetune.batch_size: must be >= 1");

    if (m.evaluation.top_k < 1) add("evaluation.top_k: must be >= 1");
    if (m.evaluation.noise_strengths.empty())
        add("evaluation.noise_strengths: must be non-empty");
    for (double s : m.evaluation.noise_strengths)
        if (s < 0.0) {
            add("evaluation.noise_strengths: values must be >= 0");
            break;
        }
    for (double t : m.evaluation.fca_thresholds)
        if (t < 0.0 || t > 1.0) {
            add("evaluation.fca_thresholds: values must be in [0,1]");
            break;
        }
    if (m.evaluation.nmi_bins < 2) add("evaluation.nmi_bins: must be >= 2");
    if (m.evaluation.nmi_max_images < 2) add("evaluation.nmi_max_images: must be >= 2");
    return errs;
}

std::string manifest_digest(const ExperimentManifest& m) {
    const std::string s = manifest_to_json(m).dump();
    return digest_hex(fnv1a(s));
}

}  // namespace sigquant
