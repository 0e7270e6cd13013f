#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "sigquant/finetune.hpp"
#include "sigquant/rng.hpp"
#include "sigquant/tensor.hpp"

namespace sigquant {
namespace eval {

using Image = Tensor<float>;
using Preprocessor = std::function<Image(const Image&)>;
using ClassifierFn = std::function<Image(const Image&)>;  // batch -> logits

// Row key convention: "identity", "AE_S", and "AE:<classifier>" for
// fine-tuned AEs.
inline std::string ae_row_key(const std::string& classifier) { return "AE:" + classifier; }

struct AccuracyMatrix {
    std::vector<std::string> rows;  // preprocessors
    std::vector<std::string> cols;  // classifiers
    std::vector<std::vector<double>> values;
    int k = 1;

    double at(const std::string& row, const std::string& col) const {
        return values[index_of(rows, row)][index_of(cols, col)];
    }

    static std::size_t index_of(const std::vector<std::string>& keys, const std::string& k) {
        auto it = std::find(keys.begin(), keys.end(), k);
        if (it == keys.end()) throw std::out_of_range("matrix key not found: " + k);
        return static_cast<std::size_t>(it - keys.begin());
    }

    void to_csv(std::ostream& os) const {
        os << "preprocessor";
        for (const auto& c : cols) os << "," << c;
        os << "\n";
        for (std::size_t r = 0; r < rows.size(); ++r) {
            os << rows[r];
            for (double v : values[r]) os << "," << v;
            os << "\n";
        }
    }
    void save_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write matrix: " + path);
        to_csv(f);
    }
    static AccuracyMatrix from_csv(std::istream& is) {
        AccuracyMatrix m;
        std::string line;
        if (!std::getline(is, line)) throw std::runtime_error("empty matrix csv");
        std::stringstream hs(line);
        std::string cell;
        std::getline(hs, cell, ',');  // corner label
        while (std::getline(hs, cell, ',')) m.cols.push_back(cell);
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            std::stringstream ls(line);
            std::getline(ls, cell, ',');
            m.rows.push_back(cell);
            std::vector<double> row;
            while (std::getline(ls, cell, ',')) row.push_back(std::stod(cell));
            if (row.size() != m.cols.size()) throw std::runtime_error("ragged matrix csv");
            m.values.push_back(std::move(row));
        }
        return m;
    }
};

struct RRCMatrix {
    std::vector<std::string> rows;  // AE ids, one per classifier
    std::vector<std::string> cols;  // classifiers
    std::vector<std::vector<double>> values;
    std::vector<std::vector<bool>> defined;

    double at(const std::string& row, const std::string& col) const {
        return values[AccuracyMatrix::index_of(rows, row)][AccuracyMatrix::index_of(cols, col)];
    }

    void to_csv(std::ostream& os) const {
        os << "ae";
        for (const auto& c : cols) os << "," << c;
        os << "\n";
        for (std::size_t r = 0; r < rows.size(); ++r) {
            os << rows[r];
            for (std::size_t c = 0; c < cols.size(); ++c) {
                os << ",";
                if (defined[r][c]) os << values[r][c];
                else os << "undefined";
            }
            os << "\n";
        }
    }
    void save_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write rrc: " + path);
        to_csv(f);
    }
};

// Top-k accuracy; logit ties resolved in favor of the lower class index.
template <typename Data>
double top_k_accuracy(const ClassifierFn& classifier, Data& data, const Preprocessor& preprocess,
                      int k, std::size_t batch_size = 32) {
    const std::size_t n = data.size();
    if (n == 0) throw std::invalid_argument("top_k_accuracy: empty dataset");
    std::size_t hits = 0;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t count = std::min(batch_size, n - start);
        auto [x, labels] = data.batch(start, count);
        Image logits = classifier(preprocess(x));
        const std::size_t classes = logits.c();
        for (std::size_t i = 0; i < count; ++i) {
            const int y = labels[i];
            const float ly = logits[i * classes + y];
            std::size_t rank = 0;
            for (std::size_t c = 0; c < classes; ++c) {
                if (logits[i * classes + c] > ly) ++rank;
                else if (logits[i * classes + c] == ly && static_cast<int>(c) < y) ++rank;
            }
            if (rank < static_cast<std::size_t>(k)) ++hits;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(n);
}

struct NamedPreprocessor {
    std::string name;
    Preprocessor fn;
};
struct NamedClassifier {
    std::string name;
    ClassifierFn fn;
};

// One evaluation per (preprocessor, classifier) pair over an identical
// dataset traversal.
template <typename Data>
AccuracyMatrix cross_matrix(const std::vector<NamedPreprocessor>& preprocessors,
                            const std::vector<NamedClassifier>& classifiers, Data& data,
                            int k = 1) {
    AccuracyMatrix m;
    m.k = k;
    for (const auto& p : preprocessors) m.rows.push_back(p.name);
    for (const auto& c : classifiers) m.cols.push_back(c.name);
    for (const auto& p : preprocessors) {
        std::vector<double> row;
        for (const auto& c : classifiers) row.push_back(top_k_accuracy(c.fn, data, p.fn, k));
        m.values.push_back(std::move(row));
    }
    return m;
}

// RRC(A_i -> j) = acc(A_i -> j) / min(acc(i), acc(j)). The default
// denominator convention reads acc(i) from the diagonal acc(A_i -> i);
// the alternative uses the stand-alone "identity" row.
inline RRCMatrix rrc(const AccuracyMatrix& m, bool identity_denominator = false) {
    RRCMatrix out;
    out.cols = m.cols;
    for (const auto& c : m.cols) out.rows.push_back(ae_row_key(c));
    auto ref_acc = [&](const std::string& classifier) {
        return identity_denominator ? m.at("identity", classifier)
                                    : m.at(ae_row_key(classifier), classifier);
    };
    for (std::size_t r = 0; r < out.rows.size(); ++r) {
        std::vector<double> vals;
        std::vector<bool> def;
        const std::string& ae_of = m.cols[r];
        for (std::size_t c = 0; c < out.cols.size(); ++c) {
            const double denom = std::min(ref_acc(ae_of), ref_acc(out.cols[c]));
            if (denom == 0.0) {
                vals.push_back(std::numeric_limits<double>::quiet_NaN());
                def.push_back(false);
                continue;
            }
            if (!identity_denominator && r == c) {
                vals.push_back(1.0);  // self-pair, exact by convention
            } else {
                vals.push_back(m.at(out.rows[r], out.cols[c]) / denom);
            }
            def.push_back(true);
        }
        out.values.push_back(std::move(vals));
        out.defined.push_back(std::move(def));
    }
    return out;
}

struct RRCEntry {
    std::string ae;
    std::string classifier;
    double value;
};

// Descending by value; ties stable by (ae, classifier) lexicographic order.
inline std::vector<RRCEntry> sort_rrc(const RRCMatrix& m) {
    std::vector<RRCEntry> out;
    for (std::size_t r = 0; r < m.rows.size(); ++r)
        for (std::size_t c = 0; c < m.cols.size(); ++c)
            if (m.defined[r][c]) out.push_back({m.rows[r], m.cols[c], m.values[r][c]});
    std::sort(out.begin(), out.end(), [](const RRCEntry& a, const RRCEntry& b) {
        if (a.value != b.value) return a.value > b.value;
        if (a.ae != b.ae) return a.ae < b.ae;
        return a.classifier < b.classifier;
    });
    return out;
}

// Per-pixel i.i.d. uniform noise in [-s, s], clamped to [0,1]. s == 0
// returns the input bit-exactly.
inline Image add_uniform_noise(const Image& batch, double s, std::mt19937_64& rng) {
    if (s == 0.0) return batch;
    Image out = batch;
    std::uniform_real_distribution<double> d(-s, s);
    for (auto& v : out.raw())
        v = static_cast<float>(std::min(1.0, std::max(0.0, static_cast<double>(v) + d(rng))));
    return out;
}

struct NoiseSweepResult {
    std::vector<double> strengths;           // ascending, includes 0 by default
    std::vector<std::string> preprocessors;  // row keys
    std::vector<std::string> classifiers;
    // values[p][c][s]
    std::vector<std::vector<std::vector<double>>> values;
    std::uint64_t seed = 0;

    double at(const std::string& p, const std::string& c, std::size_t s_idx) const {
        return values[AccuracyMatrix::index_of(preprocessors, p)]
                     [AccuracyMatrix::index_of(classifiers, c)][s_idx];
    }

    void to_csv(std::ostream& os) const {
        os << "preprocessor,classifier,s,top1,seed\n";
        for (std::size_t p = 0; p < preprocessors.size(); ++p)
            for (std::size_t c = 0; c < classifiers.size(); ++c)
                for (std::size_t s = 0; s < strengths.size(); ++s)
                    os << preprocessors[p] << "," << classifiers[c] << "," << strengths[s] << ","
                       << values[p][c][s] << "," << seed << "\n";
    }
    void save_csv(const std::string& path) const {
        std::ofstream f(path);
        if (!f) throw std::runtime_error("cannot write sweep: " + path);
        to_csv(f);
    }
};

// In-memory labeled data; used to share one noise realization across all
// (preprocessor, classifier) pairs at a given strength.
struct MaterializedData {
    Image images;
    std::vector<int> labels;

    std::size_t size() const { return images.n(); }
    std::pair<Image, std::vector<int>> batch(std::size_t start, std::size_t count) {
        std::vector<int> l(labels.begin() + start, labels.begin() + start + count);
        return {images.slice_n(start, count), std::move(l)};
    }
};

// Noise is applied to the raw input before any preprocessor; the noisy
// dataset at each strength is materialized once and shared by all pairs.
template <typename Data>
NoiseSweepResult noise_sweep(const std::vector<NamedPreprocessor>& preprocessors,
                             const std::vector<NamedClassifier>& classifiers, Data& data,
                             std::vector<double> strengths, std::uint64_t seed) {
    std::sort(strengths.begin(), strengths.end());
    NoiseSweepResult res;
    res.strengths = strengths;
    res.seed = seed;
    for (const auto& p : preprocessors) res.preprocessors.push_back(p.name);
    for (const auto& c : classifiers) res.classifiers.push_back(c.name);
    res.values.assign(preprocessors.size(),
                      std::vector<std::vector<double>>(
                          classifiers.size(), std::vector<double>(strengths.size(), 0.0)));

    MaterializedData base;
    {
        auto [x, l] = data.batch(0, data.size());
        base.images = std::move(x);
        base.labels = std::move(l);
    }
    for (std::size_t si = 0; si < strengths.size(); ++si) {
        auto rng = make_rng(substream_seed(seed, "noise-s" + std::to_string(si)));
        MaterializedData noisy;
        noisy.images = add_uniform_noise(base.images, strengths[si], rng);
        noisy.labels = base.labels;
        for (std::size_t p = 0; p < preprocessors.size(); ++p)
            for (std::size_t c = 0; c < classifiers.size(); ++c)
                res.values[p][c][si] =
                    top_k_accuracy(classifiers[c].fn, noisy, preprocessors[p].fn, 1);
    }
    return res;
}

}  // namespace eval
}  // namespace sigquant
