#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "sigquant/layers.hpp"
#include "sigquant/rng.hpp"
#include "sigquant/tensor.hpp"

namespace sigquant {

enum class Family { PlainConv, DeepBN, Residual, MultiBranch, AeSegnet };

inline std::string family_name(Family f) {
    switch (f) {
        case Family::PlainConv: return "plain-conv";
        case Family::DeepBN: return "deep-bn";
        case Family::Residual: return "residual";
        case Family::MultiBranch: return "multi-branch";
        case Family::AeSegnet: return "ae-segnet";
    }
    return "?";
}

inline Family family_from_name(const std::string& s) {
    if (s == "plain-conv") return Family::PlainConv;
    if (s == "deep-bn") return Family::DeepBN;
    if (s == "residual") return Family::Residual;
    if (s == "multi-branch") return Family::MultiBranch;
    if (s == "ae-segnet") return Family::AeSegnet;
    throw std::invalid_argument("unknown architecture family: " + s);
}

struct ArchitectureSpec {
    std::string name;
    Family family = Family::PlainConv;
    std::size_t in_channels = 3;
    std::size_t height = 32;
    std::size_t width = 32;
    std::size_t class_count = 10;          // classifiers only
    std::vector<std::size_t> stage_widths;
    std::size_t pool_stages = 3;           // ae-segnet only

    bool is_classifier() const { return family != Family::AeSegnet; }

    // Total spatial downsampling of the architecture.
    std::size_t downsample_factor() const {
        switch (family) {
            case Family::PlainConv:
            case Family::DeepBN: return std::size_t(1) << stage_widths.size();
            case Family::Residual:
                return stage_widths.size() > 1 ? std::size_t(1) << (stage_widths.size() - 1) : 1;
            case Family::MultiBranch: return 4;
            case Family::AeSegnet: return std::size_t(1) << pool_stages;
        }
        return 1;
    }

    void validate() const {
        if (stage_widths.empty()) throw std::invalid_argument(name + ": stage_widths empty");
        if (is_classifier() && class_count < 2)
            throw std::invalid_argument(name + ": class_count must be >= 2");
        const std::size_t f = downsample_factor();
        if (height % f != 0 || width % f != 0)
            throw std::invalid_argument(name + ": input " + std::to_string(height) + "x" +
                                        std::to_string(width) +
                                        " not divisible by downsampling factor " +
                                        std::to_string(f));
    }

    nlohmann::json to_json() const {
        return {{"name", name},
                {"family", family_name(family)},
                {"in_channels", in_channels},
                {"height", height},
                {"width", width},
                {"class_count", class_count},
                {"stage_widths", stage_widths},
                {"pool_stages", pool_stages}};
    }

    static ArchitectureSpec from_json(const nlohmann::json& j) {
        ArchitectureSpec s;
        s.name = j.at("name").get<std::string>();
        s.family = family_from_name(j.at("family").get<std::string>());
        s.in_channels = j.at("in_channels").get<std::size_t>();
        s.height = j.at("height").get<std::size_t>();
        s.width = j.at("width").get<std::size_t>();
        s.class_count = j.value("class_count", std::size_t(10));
        s.stage_widths = j.at("stage_widths").get<std::vector<std::size_t>>();
        s.pool_stages = j.value("pool_stages", std::size_t(0));
        return s;
    }
};

// --- checksums ----------------------------------------------------------

using Digest = std::uint64_t;

namespace detail {

template <typename T>
std::uint64_t hash_entry(const std::string& name, const T* values, std::size_t count) {
    std::uint64_t h = fnv1a(name);
    for (std::size_t i = 0; i < count; ++i) {
        const double d = static_cast<double>(values[i]);
        h = fnv1a(&d, sizeof(double), h);
    }
    return h;
}

}  // namespace detail

// Order-independent digest over named parameters and buffers.
template <typename T>
Digest state_checksum(const std::vector<Param<T>*>& params, const std::vector<BufferRef>& bufs) {
    std::uint64_t sum = 0;
    for (const auto* p : params)
        sum += detail::hash_entry(p->name, p->value.data(), p->value.size());
    for (const auto& b : bufs) sum += detail::hash_entry(b.name, b.data->data(), b.data->size());
    return sum;
}

inline std::string digest_hex(Digest d) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << d;
    return os.str();
}

// --- classifier ----------------------------------------------------------

template <typename T>
class ClassifierModel {
  public:
    ClassifierModel(ArchitectureSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
        if (!spec_.is_classifier())
            throw std::invalid_argument("build_classifier: " + spec_.name +
                                        " is not a classifier family");
        spec_.validate();
        build();
        auto rng = make_rng(seed);
        init(rng);
    }

    const ArchitectureSpec& spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    bool frozen() const { return frozen_; }
    void freeze() { frozen_ = true; }

    Tensor<T> forward(const Tensor<T>& x, bool training = false) {
        if (x.c() != spec_.in_channels || x.h() != spec_.height || x.w() != spec_.width)
            throw std::invalid_argument(spec_.name + ": input shape " + x.shape_str() +
                                        " does not match spec");
        return net_.forward(x, training && !frozen_);
    }

    Tensor<T> backward(const Tensor<T>& dlogits) { return net_.backward(dlogits); }

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        net_.collect_params(out);
        return out;
    }
    std::vector<BufferRef> buffers() {
        std::vector<BufferRef> out;
        net_.collect_buffers(out);
        return out;
    }

    Digest checksum() {
        return state_checksum<T>(params(), buffers());
    }

  private:
    void build() {
        const auto& w = spec_.stage_widths;
        std::size_t c = spec_.in_channels;
        if (spec_.family == Family::PlainConv) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                net_.template emplace<Conv2d<T>>("conv" + std::to_string(i), c, w[i], 3);
                net_.template emplace<ReLU<T>>();
                net_.template emplace<MaxPool2d<T>>(2);
                c = w[i];
            }
            const std::size_t f = spec_.downsample_factor();
            net_.template emplace<Flatten<T>>();
            net_.template emplace<Dense<T>>(
                "fc", c * (spec_.height / f) * (spec_.width / f), spec_.class_count);
        } else if (spec_.family == Family::DeepBN) {
            for (std::size_t i = 0; i < w.size(); ++i) {
                for (int rep = 0; rep < 2; ++rep) {
                    const std::string nm = "conv" + std::to_string(i) + "_" + std::to_string(rep);
                    net_.template emplace<Conv2d<T>>(nm, c, w[i], 3);
                    net_.template emplace<BatchNorm2d<T>>("bn" + std::to_string(i) + "_" +
                                                              std::to_string(rep),
                                                          w[i]);
                    net_.template emplace<ReLU<T>>();
                    c = w[i];
                }
                net_.template emplace<MaxPool2d<T>>(2);
            }
            const std::size_t f = spec_.downsample_factor();
            net_.template emplace<Flatten<T>>();
            net_.template emplace<Dense<T>>(
                "fc", c * (spec_.height / f) * (spec_.width / f), spec_.class_count);
        } else if (spec_.family == Family::Residual) {
            net_.template emplace<Conv2d<T>>("stem", c, w[0], 3);
            net_.template emplace<BatchNorm2d<T>>("stem_bn", w[0]);
            net_.template emplace<ReLU<T>>();
            c = w[0];
            for (std::size_t i = 1; i < w.size(); ++i) {
                net_.template emplace<ResidualBlock<T>>("res" + std::to_string(i), c, w[i]);
                net_.template emplace<MaxPool2d<T>>(2);
                c = w[i];
            }
            net_.template emplace<GlobalAvgPool<T>>();
            net_.template emplace<Flatten<T>>();
            net_.template emplace<Dense<T>>("fc", c, spec_.class_count);
        } else {  // MultiBranch
            net_.template emplace<Conv2d<T>>("stem", c, w[0], 3);
            net_.template emplace<ReLU<T>>();
            net_.template emplace<MaxPool2d<T>>(2);
            const std::size_t branch = w.size() > 1 ? w[1] : w[0];
            net_.template emplace<MultiBranchBlock<T>>("mix", w[0], branch);
            net_.template emplace<ReLU<T>>();
            net_.template emplace<MaxPool2d<T>>(2);
            net_.template emplace<GlobalAvgPool<T>>();
            net_.template emplace<Flatten<T>>();
            net_.template emplace<Dense<T>>("fc", 3 * branch, spec_.class_count);
        }
    }

    void init(std::mt19937_64& rng) { net_.init_params(rng); }

    ArchitectureSpec spec_;
    std::uint64_t seed_;
    bool frozen_ = false;
    Sequential<T> net_;
};

template <typename T>
ClassifierModel<T> build_classifier(const ArchitectureSpec& spec, std::uint64_t seed) {
    return ClassifierModel<T>(spec, seed);
}

// --- autoencoder -----------------------------------------------------------
//
// SegNet-style encoder/decoder. stage_widths has pool_stages + 1 entries:
// one per encoder stage plus the latent width. The decoder mirrors the
// encoder and re-places activations at the recorded argmax positions.
template <typename T>
class AutoencoderModel {
  public:
    AutoencoderModel(ArchitectureSpec spec, std::uint64_t seed, bool strict_range = false)
        : spec_(std::move(spec)), seed_(seed), strict_range_(strict_range) {
        if (spec_.family != Family::AeSegnet)
            throw std::invalid_argument("build_autoencoder: " + spec_.name + " is not ae-segnet");
        if (spec_.stage_widths.size() != spec_.pool_stages + 1)
            throw std::invalid_argument(spec_.name + ": ae-segnet needs pool_stages+1 widths");
        spec_.validate();
        build();
        auto rng = make_rng(seed);
        for (auto& c : enc_convs_) c->init_params(rng);
        lat_conv_->init_params(rng);
        for (auto& c : dec_convs_) c->init_params(rng);
        out_conv_->init_params(rng);
    }

    const ArchitectureSpec& spec() const { return spec_; }
    std::size_t pool_stages() const { return spec_.pool_stages; }
    std::uint64_t range_violations() const { return range_violations_; }

    std::pair<Tensor<T>, std::vector<PoolingRecord>> encode(const Tensor<T>& x) {
        check_range(x);
        std::vector<PoolingRecord> records;
        Tensor<T> cur = x;
        for (std::size_t i = 0; i < spec_.pool_stages; ++i) {
            cur = enc_relus_[i].forward(enc_convs_[i]->forward(cur, false), false);
            auto [pooled, rec] = pool_with_indices(cur, 2);
            cur = std::move(pooled);
            records.push_back(std::move(rec));
        }
        cur = lat_relu_.forward(lat_conv_->forward(cur, false), false);
        return {std::move(cur), std::move(records)};
    }

    Tensor<T> decode(const Tensor<T>& latent, const std::vector<PoolingRecord>& records) {
        if (records.size() != spec_.pool_stages)
            throw std::invalid_argument(spec_.name + ": expected " +
                                        std::to_string(spec_.pool_stages) + " pooling records, got " +
                                        std::to_string(records.size()));
        Tensor<T> cur = latent;
        for (std::size_t k = 0; k < spec_.pool_stages; ++k) {
            const std::size_t i = spec_.pool_stages - 1 - k;
            cur = dec_relus_[i].forward(dec_convs_[i]->forward(cur, false), false);
            cur = unpool_with_indices(cur, records[i]);
        }
        cur = clamp_.forward(out_conv_->forward(cur, false), false);
        return cur;
    }

    Tensor<T> reconstruct(const Tensor<T>& x) {
        auto [latent, records] = encode(x);
        records_ = records;  // cached for backward
        return decode(latent, records_);
    }

    // Gradient pass matching the last reconstruct() call. Accumulates into
    // parameter grads and returns d(loss)/d(input).
    Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> d = out_conv_->backward(clamp_.backward(dy));
        for (std::size_t i = 0; i < spec_.pool_stages; ++i) {
            d = gather_pooled(d, records_[i]);
            d = dec_convs_[i]->backward(dec_relus_[i].backward(d));
        }
        d = lat_conv_->backward(lat_relu_.backward(d));
        for (std::size_t k = 0; k < spec_.pool_stages; ++k) {
            const std::size_t i = spec_.pool_stages - 1 - k;
            d = unpool_with_indices(d, records_[i]);
            d = enc_convs_[i]->backward(enc_relus_[i].backward(d));
        }
        return d;
    }

    std::vector<Param<T>*> encoder_params() {
        std::vector<Param<T>*> out;
        for (auto& c : enc_convs_) c->collect_params(out);
        lat_conv_->collect_params(out);
        return out;
    }
    std::vector<Param<T>*> decoder_params() {
        std::vector<Param<T>*> out;
        for (auto& c : dec_convs_) c->collect_params(out);
        out_conv_->collect_params(out);
        return out;
    }
    std::vector<Param<T>*> params() {
        auto out = encoder_params();
        auto dec = decoder_params();
        out.insert(out.end(), dec.begin(), dec.end());
        return out;
    }

    Digest checksum() { return state_checksum<T>(params(), {}); }
    Digest encoder_checksum() { return state_checksum<T>(encoder_params(), {}); }
    Digest decoder_checksum() { return state_checksum<T>(decoder_params(), {}); }

    // Test stubs. Identity requires pool_stages == 0 and latent width equal
    // to the input channel count.
    void make_identity() {
        if (spec_.pool_stages != 0 || spec_.stage_widths.back() != spec_.in_channels)
            throw std::logic_error("make_identity needs P=0 and matching widths");
        lat_conv_->init_identity();
        out_conv_->init_identity();
    }
    void make_constant(T value) {
        out_conv_->weight().value.fill(T(0));
        out_conv_->bias().value.fill(value);
    }

    Conv2d<T>& out_conv() { return *out_conv_; }

    // Structural + parameter copy (layer caches are not copied).
    AutoencoderModel clone() {
        AutoencoderModel copy(spec_, seed_, strict_range_);
        auto src = params();
        auto dst = copy.params();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value = src[i]->value;
        return copy;
    }

  private:
    void build() {
        const auto& w = spec_.stage_widths;
        const std::size_t P = spec_.pool_stages;
        std::size_t c = spec_.in_channels;
        for (std::size_t i = 0; i < P; ++i) {
            enc_convs_.push_back(
                std::make_unique<Conv2d<T>>("encoder.conv" + std::to_string(i), c, w[i], 3));
            c = w[i];
        }
        enc_relus_.resize(P);
        lat_conv_ = std::make_unique<Conv2d<T>>("encoder.latent", c, w[P], 3);
        dec_relus_.resize(P);
        dec_convs_.resize(P);
        for (std::size_t i = 0; i < P; ++i) {
            const std::size_t in_ch = (i + 1 == P) ? w[P] : w[i + 1];
            dec_convs_[i] =
                std::make_unique<Conv2d<T>>("decoder.conv" + std::to_string(i), in_ch, w[i], 3);
        }
        out_conv_ = std::make_unique<Conv2d<T>>("decoder.out", P > 0 ? w[0] : w[P],
                                                spec_.in_channels, 3);
    }

    void check_range(const Tensor<T>& x) {
        for (std::size_t i = 0; i < x.size(); ++i)
            if (x[i] < T(0) || x[i] > T(1)) {
                ++range_violations_;
                if (strict_range_)
                    throw std::out_of_range(spec_.name + ": input intensity outside [0,1]");
                break;
            }
    }

    ArchitectureSpec spec_;
    std::uint64_t seed_;
    bool strict_range_;
    std::uint64_t range_violations_ = 0;
    std::vector<std::unique_ptr<Conv2d<T>>> enc_convs_;
    std::vector<ReLU<T>> enc_relus_;
    std::unique_ptr<Conv2d<T>> lat_conv_;
    ReLU<T> lat_relu_;
    std::vector<std::unique_ptr<Conv2d<T>>> dec_convs_;
    std::vector<ReLU<T>> dec_relus_;
    std::unique_ptr<Conv2d<T>> out_conv_;
    Clamp01<T> clamp_;
    std::vector<PoolingRecord> records_;
};

template <typename T>
AutoencoderModel<T> build_autoencoder(const ArchitectureSpec& spec, std::uint64_t seed) {
    return AutoencoderModel<T>(spec, seed);
}

template <typename T>
Digest parameter_checksum(ClassifierModel<T>& m) {
    return m.checksum();
}
template <typename T>
Digest parameter_checksum(AutoencoderModel<T>& m) {
    return m.checksum();
}

// --- checkpoint container ---------------------------------------------------
//
// Self-describing container: magic line, header byte count, JSON header
// (kind, spec, seed, checksum, entry table), then a little-endian float64
// payload. Loaders verify the checksum after reading.

namespace detail {

template <typename T>
void write_checkpoint(const std::string& path, const std::string& kind,
                      const ArchitectureSpec& spec, std::uint64_t seed,
                      const std::vector<Param<T>*>& params, const std::vector<BufferRef>& bufs) {
    nlohmann::json header;
    header["kind"] = kind;
    header["spec"] = spec.to_json();
    header["seed"] = seed;
    header["checksum"] = digest_hex(state_checksum<T>(params, bufs));
    nlohmann::json entries = nlohmann::json::array();
    for (const auto* p : params)
        entries.push_back({{"name", p->name}, {"count", p->value.size()}});
    for (const auto& b : bufs) entries.push_back({{"name", b.name}, {"count", b.data->size()}});
    header["entries"] = entries;
    const std::string htext = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write checkpoint: " + path);
    f << "SIGQUANT-CKPT v1\n" << htext.size() << "\n" << htext;
    auto put = [&f](double d) {
        f.write(reinterpret_cast<const char*>(&d), sizeof(double));
    };
    for (const auto* p : params)
        for (std::size_t i = 0; i < p->value.size(); ++i) put(static_cast<double>(p->value[i]));
    for (const auto& b : bufs)
        for (double d : *b.data) put(d);
    if (!f) throw std::runtime_error("checkpoint write failed: " + path);
}

inline nlohmann::json read_checkpoint_header(std::ifstream& f, const std::string& path) {
    std::string magic;
    std::getline(f, magic);
    if (magic != "SIGQUANT-CKPT v1") throw std::runtime_error("bad checkpoint magic: " + path);
    std::string len_line;
    std::getline(f, len_line);
    const std::size_t hlen = std::stoull(len_line);
    std::string htext(hlen, '\0');
    f.read(htext.data(), static_cast<std::streamsize>(hlen));
    return nlohmann::json::parse(htext);
}

template <typename T>
void read_checkpoint_payload(std::ifstream& f, const nlohmann::json& header,
                             const std::vector<Param<T>*>& params,
                             const std::vector<BufferRef>& bufs, const std::string& path) {
    auto get = [&f]() {
        double d;
        f.read(reinterpret_cast<char*>(&d), sizeof(double));
        return d;
    };
    std::size_t idx = 0;
    const auto& entries = header.at("entries");
    auto expect = [&](const std::string& name, std::size_t count) {
        if (idx >= entries.size() || entries[idx].at("name") != name ||
            entries[idx].at("count") != count)
            throw std::runtime_error("checkpoint entry mismatch at '" + name + "' in " + path);
        ++idx;
    };
    for (auto* p : params) {
        expect(p->name, p->value.size());
        for (std::size_t i = 0; i < p->value.size(); ++i) p->value[i] = static_cast<T>(get());
    }
    for (const auto& b : bufs) {
        expect(b.name, b.data->size());
        for (auto& d : *b.data) d = get();
    }
    if (!f) throw std::runtime_error("truncated checkpoint payload: " + path);
    const Digest expected = std::stoull(header.at("checksum").get<std::string>(), nullptr, 16);
    if (state_checksum<T>(params, bufs) != expected)
        throw std::runtime_error("checkpoint checksum mismatch: " + path);
}

}  // namespace detail

template <typename T>
void save_classifier(const std::string& path, ClassifierModel<T>& m) {
    detail::write_checkpoint<T>(path, "classifier", m.spec(), m.seed(), m.params(), m.buffers());
}

template <typename T>
ClassifierModel<T> load_classifier(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    auto header = detail::read_checkpoint_header(f, path);
    if (header.at("kind") != "classifier")
        throw std::runtime_error("not a classifier checkpoint: " + path);
    ClassifierModel<T> m(ArchitectureSpec::from_json(header.at("spec")),
                         header.at("seed").get<std::uint64_t>());
    detail::read_checkpoint_payload<T>(f, header, m.params(), m.buffers(), path);
    return m;
}

template <typename T>
void save_autoencoder(const std::string& path, AutoencoderModel<T>& m) {
    detail::write_checkpoint<T>(path, "autoencoder", m.spec(), 0, m.params(), {});
}

template <typename T>
AutoencoderModel<T> load_autoencoder(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    auto header = detail::read_checkpoint_header(f, path);
    if (header.at("kind") != "autoencoder")
        throw std::runtime_error("not an autoencoder checkpoint: " + path);
    AutoencoderModel<T> m(ArchitectureSpec::from_json(header.at("spec")), 0);
    detail::read_checkpoint_payload<T>(f, header, m.params(), {}, path);
    return m;
}

}  // namespace sigquant
