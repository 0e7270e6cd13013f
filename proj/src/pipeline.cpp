#include "sigquant/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "sigquant/dataset.hpp"
#include "sigquant/evaluate.hpp"
#include "sigquant/fca.hpp"
#include "sigquant/finetune.hpp"
#include "sigquant/infometrics.hpp"
#include "sigquant/plot.hpp"
#include "sigquant/pretrain.hpp"
#include "sigquant/rng.hpp"

namespace sigquant {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& pipeline_stages() {
    static const std::vector<std::string> s = {"pretrain",    "train-classifiers", "finetune",
                                               "eval-matrix", "noise-sweep",       "rrc",
                                               "fca",         "nmi",               "report"};
    return s;
}

namespace {

std::string file_checksum(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read artifact: " + p.string());
    std::uint64_t h = 0xcbf29ce484222325ULL;
    char buf[4096];
    while (f.read(buf, sizeof(buf)) || f.gcount() > 0)
        h = fnv1a(buf, static_cast<std::size_t>(f.gcount()), h);
    return digest_hex(h);
}

// All artifacts land via a temp file plus rename so a crash never leaves a
// half-written file at the final path.
void atomic_finalize(const fs::path& tmp, const fs::path& final_path) {
    fs::rename(tmp, final_path);
}

void atomic_write_text(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw std::runtime_error("cannot write: " + tmp.string());
        f << text;
    }
    atomic_finalize(tmp, path);
}

struct PipelineState {
    ExperimentManifest m;
    std::uint64_t seed = 0;
    fs::path run_dir;
    json record;
    bool resume = false;

    SyntheticStripesDataset dataset{0, 32, 32};

    fs::path ckpt(const std::string& name) const { return run_dir / "checkpoints" / name; }
    fs::path table(const std::string& name) const { return run_dir / "tables" / name; }
    fs::path figure(const std::string& name) const { return run_dir / "figures" / name; }
    fs::path lattice(const std::string& name) const { return run_dir / "lattices" / name; }
};

json env_fingerprint() {
    json e;
#if defined(__VERSION__)
    e["compiler"] = __VERSION__;
#endif
    e["pointer_bits"] = sizeof(void*) * 8;
    const char* dev = std::getenv("SIGQUANT_DEVICE");
    e["device"] = dev ? dev : "cpu";
    return e;
}

bool stage_done_and_intact(const PipelineState& st, const std::string& stage) {
    if (!st.resume) return false;
    if (!st.record.contains("stages") || !st.record["stages"].contains(stage)) return false;
    const json& rec = st.record["stages"][stage];
    if (rec.value("status", "") != "completed") return false;
    for (const auto& a : rec.value("artifacts", json::array())) {
        const fs::path p = st.run_dir / a.at("path").get<std::string>();
        if (!fs::exists(p)) return false;
        if (file_checksum(p) != a.at("checksum").get<std::string>()) return false;
    }
    return true;
}

void save_run_record(PipelineState& st) {
    atomic_write_text(st.run_dir / "run.json", st.record.dump(2) + "\n");
}

// Runs `body`, which returns the list of artifact paths (relative to the
// run dir), and records status, wall time, and artifact checksums.
template <typename Body>
void run_stage(PipelineState& st, const std::string& stage, Body body) {
    if (stage_done_and_intact(st, stage)) {
        st.record["stages"][stage]["resumed"] = true;
        return;
    }
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::string> artifacts;
    try {
        artifacts = body();
    } catch (...) {
        st.record["stages"][stage] = {{"status", "failed"}};
        save_run_record(st);
        throw;
    }
    const auto t1 = std::chrono::steady_clock::now();
    json arts = json::array();
    for (const auto& rel : artifacts)
        arts.push_back({{"path", rel}, {"checksum", file_checksum(st.run_dir / rel)}});
    st.record["stages"][stage] = {
        {"status", "completed"},
        {"wall_ms", std::chrono::duration<double, std::milli>(t1 - t0).count()},
        {"artifacts", arts},
        {"resumed", false}};
    save_run_record(st);
}

std::string classifier_ckpt(const std::string& name) { return "classifier_" + name + ".ckpt"; }
std::string finetuned_ckpt(const std::string& name) { return "ae_finetuned_" + name + ".ckpt"; }

ClassifierModel<float> load_frozen_classifier(const PipelineState& st, const std::string& name) {
    auto m = load_classifier<float>(st.ckpt(classifier_ckpt(name)).string());
    m.freeze();
    return m;
}

// --- stage bodies -----------------------------------------------------------

std::vector<std::string> stage_train_classifiers(PipelineState& st) {
    std::vector<std::string> artifacts;
    json accs;
    for (const auto& spec : st.m.classifiers) {
        ClassifierModel<float> model(spec,
                                     substream_seed(st.seed, "train-classifiers:" + spec.name));
        LabeledSplit data(st.dataset, st.m.dataset.classifier_split);
        const double top1 = train_classifier(model, data, st.m.classifier_training);
        accs[spec.name] = top1;
        const fs::path out = st.ckpt(classifier_ckpt(spec.name));
        const fs::path tmp = out.string() + ".tmp";
        save_classifier(tmp.string(), model);
        atomic_finalize(tmp, out);
        artifacts.push_back("checkpoints/" + classifier_ckpt(spec.name));
    }
    atomic_write_text(st.table("classifier_train_top1.json"), accs.dump(2) + "\n");
    artifacts.push_back("tables/classifier_train_top1.json");
    return artifacts;
}

std::vector<std::string> stage_pretrain(PipelineState& st) {
    AutoencoderModel<float> ae(st.m.autoencoder, substream_seed(st.seed, "pretrain"));
    UnlabeledSplit train(st.dataset, st.m.dataset.pretrain_split);
    UnlabeledSplit val(st.dataset, st.m.dataset.eval_split);
    PretrainConfig cfg = st.m.pretrain;
    cfg.seed = substream_seed(st.seed, "pretrain:steps");
    TrainingLog log = pretrain(ae, train, cfg, &val);

    const fs::path out = st.ckpt("ae_pretrained.ckpt");
    const fs::path tmp = out.string() + ".tmp";
    save_autoencoder(tmp.string(), ae);
    atomic_finalize(tmp, out);

    std::ostringstream csv;
    log.to_csv(csv);
    atomic_write_text(st.table("pretrain_log.csv"), csv.str());
    return {"checkpoints/ae_pretrained.ckpt", "tables/pretrain_log.csv"};
}

std::vector<std::string> stage_finetune(PipelineState& st) {
    std::vector<std::string> artifacts;
    AutoencoderModel<float> pretrained =
        load_autoencoder<float>(st.ckpt("ae_pretrained.ckpt").string());
    for (const auto& spec : st.m.classifiers) {
        ClassifierModel<float> clf = load_frozen_classifier(st, spec.name);
        AutoencoderModel<float> branch = pretrained.clone();
        CoupledModel<float> cm(branch, clf);
        LabeledSplit data(st.dataset, st.m.dataset.classifier_split);
        FinetuneConfig cfg = st.m.finetune;
        cfg.seed = substream_seed(st.seed, "finetune:" + spec.name);
        finetune(cm, data, cfg);
        const fs::path out = st.ckpt(finetuned_ckpt(spec.name));
        const fs::path tmp = out.string() + ".tmp";
        save_autoencoder(tmp.string(), branch);
        atomic_finalize(tmp, out);
        artifacts.push_back("checkpoints/" + finetuned_ckpt(spec.name));
    }
    return artifacts;
}

struct EvalActors {
    std::vector<AutoencoderModel<float>> aes;  // pretrained first, then per classifier
    std::vector<ClassifierModel<float>> classifiers;
    std::vector<eval::NamedPreprocessor> preprocessors;
    std::vector<eval::NamedClassifier> classifier_fns;
};

EvalActors load_eval_actors(PipelineState& st) {
    EvalActors a;
    a.aes.reserve(1 + st.m.classifiers.size());
    a.classifiers.reserve(st.m.classifiers.size());
    a.aes.push_back(load_autoencoder<float>(st.ckpt("ae_pretrained.ckpt").string()));
    for (const auto& spec : st.m.classifiers) {
        a.aes.push_back(load_autoencoder<float>(st.ckpt(finetuned_ckpt(spec.name)).string()));
        a.classifiers.push_back(load_frozen_classifier(st, spec.name));
    }
    a.preprocessors.push_back({"identity", [](const eval::Image& x) { return x; }});
    a.preprocessors.push_back(
        {"AE_S", [&a](const eval::Image& x) { return a.aes[0].reconstruct(x); }});
    for (std::size_t i = 0; i < st.m.classifiers.size(); ++i)
        a.preprocessors.push_back({eval::ae_row_key(st.m.classifiers[i].name),
                                   [&a, i](const eval::Image& x) {
                                       return a.aes[i + 1].reconstruct(x);
                                   }});
    for (std::size_t i = 0; i < st.m.classifiers.size(); ++i)
        a.classifier_fns.push_back({st.m.classifiers[i].name, [&a, i](const eval::Image& x) {
                                        return a.classifiers[i].forward(x, false);
                                    }});
    return a;
}

eval::MaterializedData eval_data(PipelineState& st) {
    LabeledSplit split(st.dataset, st.m.dataset.eval_split);
    auto [x, labels] = split.batch(0, split.size());
    return {std::move(x), std::move(labels)};
}

std::vector<std::string> stage_eval_matrix(PipelineState& st) {
    EvalActors a = load_eval_actors(st);
    auto data = eval_data(st);
    eval::AccuracyMatrix m =
        eval::cross_matrix(a.preprocessors, a.classifier_fns, data, st.m.evaluation.top_k);
    std::ostringstream csv;
    m.to_csv(csv);
    atomic_write_text(st.table("accuracy_matrix.csv"), csv.str());
    return {"tables/accuracy_matrix.csv"};
}

eval::AccuracyMatrix load_accuracy(const PipelineState& st) {
    std::ifstream f(st.table("accuracy_matrix.csv"));
    if (!f) throw std::runtime_error("eval-matrix output missing; run eval-matrix first");
    return eval::AccuracyMatrix::from_csv(f);
}

std::vector<std::string> stage_noise_sweep(PipelineState& st) {
    EvalActors a = load_eval_actors(st);
    auto data = eval_data(st);
    eval::NoiseSweepResult res =
        eval::noise_sweep(a.preprocessors, a.classifier_fns, data, st.m.evaluation.noise_strengths,
                          substream_seed(st.seed, "noise-sweep"));
    std::ostringstream csv;
    res.to_csv(csv);
    atomic_write_text(st.table("noise_sweep.csv"), csv.str());
    return {"tables/noise_sweep.csv"};
}

std::vector<std::string> stage_rrc(PipelineState& st) {
    eval::AccuracyMatrix m = load_accuracy(st);
    eval::RRCMatrix r = eval::rrc(m, st.m.evaluation.identity_denominator);
    std::ostringstream csv;
    r.to_csv(csv);
    atomic_write_text(st.table("rrc.csv"), csv.str());

    std::ostringstream sorted;
    sorted << "rank,ae,classifier,rrc\n";
    const auto entries = eval::sort_rrc(r);
    for (std::size_t i = 0; i < entries.size(); ++i)
        sorted << i + 1 << "," << entries[i].ae << "," << entries[i].classifier << ","
               << entries[i].value << "\n";
    atomic_write_text(st.table("rrc_sorted.csv"), sorted.str());
    return {"tables/rrc.csv", "tables/rrc_sorted.csv"};
}

std::string threshold_tag(double t) {
    std::ostringstream os;
    os << "t" << t;
    std::string s = os.str();
    for (auto& ch : s)
        if (ch == '.') ch = 'p';
    return s;
}

std::vector<std::string> stage_fca(PipelineState& st) {
    eval::AccuracyMatrix m = load_accuracy(st);
    eval::RRCMatrix r = eval::rrc(m, st.m.evaluation.identity_denominator);
    std::vector<std::string> artifacts;
    json summary;
    for (double t : st.m.evaluation.fca_thresholds) {
        fca::FormalContext ctx = fca::threshold_context(r, t);
        fca::ConceptLattice lat = fca::build_lattice(ctx);
        const std::string tag = threshold_tag(t);

        std::ostringstream ctx_csv;
        ctx.to_csv(ctx_csv);
        atomic_write_text(st.lattice("context_" + tag + ".csv"), ctx_csv.str());
        atomic_write_text(st.lattice("lattice_" + tag + ".dot"), fca::export_dot(lat));
        artifacts.push_back("lattices/context_" + tag + ".csv");
        artifacts.push_back("lattices/lattice_" + tag + ".dot");
        summary[tag] = {{"threshold", t},
                        {"concepts", lat.concepts.size()},
                        {"total_order", fca::is_total_order(lat)}};
    }
    atomic_write_text(st.lattice("summary.json"), summary.dump(2) + "\n");
    artifacts.push_back("lattices/summary.json");
    return artifacts;
}

std::vector<std::string> stage_nmi(PipelineState& st) {
    EvalActors a = load_eval_actors(st);
    auto data = eval_data(st);
    const std::size_t n =
        std::min<std::size_t>(data.size(), static_cast<std::size_t>(st.m.evaluation.nmi_max_images));
    eval::Image subset = data.images.slice_n(0, n);

    std::vector<std::string> ae_names = {"AE_S"};
    for (const auto& c : st.m.classifiers) ae_names.push_back(eval::ae_row_key(c.name));

    json report;
    for (std::size_t i = 0; i < a.aes.size(); ++i) {
        auto recon = [&a, i](const eval::Image& x) { return a.aes[i].reconstruct(x); };
        report[ae_names[i]] = {
            {"intra", info::intra_nmi(recon, subset, st.m.evaluation.nmi_bins).to_json()},
            {"inter", info::inter_nmi(recon, subset, st.m.evaluation.nmi_bins).to_json()}};
    }
    atomic_write_text(st.table("nmi.json"), report.dump(2) + "\n");

    // LAB channel histograms: first evaluation image, original vs the
    // pre-trained AE's reconstruction.
    eval::Image first = subset.slice_n(0, 1);
    eval::Image recon0 = a.aes[0].reconstruct(first);
    info::LabHistogram horig = info::lab_channel_histograms(first, 0, st.m.evaluation.nmi_bins);
    info::LabHistogram hrec = info::lab_channel_histograms(recon0, 0, st.m.evaluation.nmi_bins);
    std::ostringstream lab;
    lab << "image,channel,bin_low,bin_high,count\n";
    auto append = [&lab](const char* tag, const info::LabHistogram& h) {
        std::ostringstream one;
        h.to_csv(one);
        std::istringstream lines(one.str());
        std::string ln;
        std::getline(lines, ln);  // drop the per-histogram header
        while (std::getline(lines, ln))
            if (!ln.empty()) lab << tag << "," << ln << "\n";
    };
    append("original", horig);
    append("reconstruction", hrec);
    atomic_write_text(st.table("lab_histograms.csv"), lab.str());
    return {"tables/nmi.json", "tables/lab_histograms.csv"};
}

std::vector<std::string> stage_report(PipelineState& st) {
    std::vector<std::string> artifacts;

    // Noise sweep line chart, one series per (preprocessor) averaged over
    // classifiers plus the identity baseline per classifier.
    {
        std::ifstream f(st.table("noise_sweep.csv"));
        if (!f) throw std::runtime_error("noise-sweep output missing; run noise-sweep first");
        std::string line;
        std::getline(f, line);  // header
        std::map<std::string, std::map<double, std::pair<double, int>>> agg;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::stringstream ls(line);
            std::string pre, clf, s, acc, seed;
            std::getline(ls, pre, ',');
            std::getline(ls, clf, ',');
            std::getline(ls, s, ',');
            std::getline(ls, acc, ',');
            std::getline(ls, seed, ',');
            auto& cell = agg[pre][std::stod(s)];
            cell.first += std::stod(acc);
            cell.second += 1;
        }
        std::vector<plot::Series> series;
        for (const auto& [pre, pts] : agg) {
            plot::Series sr;
            sr.name = pre;
            for (const auto& [s, cell] : pts) {
                sr.x.push_back(s);
                sr.y.push_back(cell.first / cell.second);
            }
            series.push_back(std::move(sr));
        }
        const fs::path out = st.figure("noise_sweep.png");
        const fs::path tmp = out.string() + ".tmp";
        plot::line_chart(tmp.string(), "TOP-1 VS NOISE STRENGTH", series, "NOISE S",
                         "MEAN TOP-1");
        atomic_finalize(tmp, out);
        artifacts.push_back("figures/noise_sweep.png");
    }

    // RRC bar chart in sorted order.
    {
        std::ifstream f(st.table("rrc_sorted.csv"));
        if (!f) throw std::runtime_error("rrc output missing; run rrc first");
        std::string line;
        std::getline(f, line);
        std::vector<plot::Bar> bars;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::stringstream ls(line);
            std::string rank, ae, clf, v;
            std::getline(ls, rank, ',');
            std::getline(ls, ae, ',');
            std::getline(ls, clf, ',');
            std::getline(ls, v, ',');
            bars.push_back({ae + ">" + clf, std::stod(v), static_cast<int>(bars.size())});
        }
        const fs::path out = st.figure("rrc_sorted.png");
        const fs::path tmp = out.string() + ".tmp";
        plot::bar_chart(tmp.string(), "RRC (SORTED)", bars, "RRC");
        atomic_finalize(tmp, out);
        artifacts.push_back("figures/rrc_sorted.png");
    }

    // nMI bar chart: intra and inter per AE.
    {
        std::ifstream f(st.table("nmi.json"));
        if (!f) throw std::runtime_error("nmi output missing; run nmi first");
        json rpt;
        f >> rpt;
        std::vector<plot::Bar> bars;
        for (auto it = rpt.begin(); it != rpt.end(); ++it) {
            bars.push_back({it.key() + " IN", it.value()["intra"]["mean"].get<double>(), 0});
            bars.push_back({it.key() + " X", it.value()["inter"]["mean"].get<double>(), 1});
        }
        const fs::path out = st.figure("nmi.png");
        const fs::path tmp = out.string() + ".tmp";
        plot::bar_chart(tmp.string(), "NMI INTRA(IN) / INTER(X)", bars, "NMI");
        atomic_finalize(tmp, out);
        artifacts.push_back("figures/nmi.png");
    }

    // LAB channel histogram panels for the original image.
    {
        std::ifstream f(st.table("lab_histograms.csv"));
        if (f) {
            std::string line;
            std::getline(f, line);
            std::map<std::string, std::map<std::string, std::vector<double>>> chans;
            while (std::getline(f, line)) {
                if (line.empty()) continue;
                std::stringstream ls(line);
                std::string img, ch, lo, hi, count;
                std::getline(ls, img, ',');
                std::getline(ls, ch, ',');
                std::getline(ls, lo, ',');
                std::getline(ls, hi, ',');
                std::getline(ls, count, ',');
                chans[img][ch].push_back(std::stod(count));
            }
            std::map<std::string, std::vector<std::vector<double>>> panels;
            for (const char* ch : {"L", "A", "B"})
                if (chans.count("original") && chans["original"].count(ch))
                    panels["original"].push_back(chans["original"][ch]);
            if (panels.count("original") && panels["original"].size() == 3) {
                const fs::path out = st.figure("lab_histograms.png");
                const fs::path tmp = out.string() + ".tmp";
                plot::histogram_panels(tmp.string(), "LAB CHANNEL HISTOGRAMS (ORIGINAL)",
                                       {"L", "A", "B"}, panels["original"]);
                atomic_finalize(tmp, out);
                artifacts.push_back("figures/lab_histograms.png");
            }
        }
    }

    // Index of everything that exists in the bundle.
    std::ostringstream idx;
    idx << "# Run report: " << st.m.name << "\n\n";
    idx << "Manifest digest: `" << st.record["manifest_digest"].get<std::string>() << "`\n\n";
    for (const char* dir : {"tables", "figures", "lattices", "checkpoints"}) {
        std::vector<std::string> files;
        if (fs::exists(st.run_dir / dir))
            for (const auto& e : fs::directory_iterator(st.run_dir / dir))
                if (e.is_regular_file() && e.path().extension() != ".tmp")
                    files.push_back(e.path().filename().string());
        std::sort(files.begin(), files.end());
        if (files.empty()) continue;
        idx << "## " << dir << "\n\n";
        for (const auto& f : files) idx << "- [" << f << "](" << dir << "/" << f << ")\n";
        idx << "\n";
    }
    atomic_write_text(st.run_dir / "index.md", idx.str());
    artifacts.push_back("index.md");
    return artifacts;
}

}  // namespace

RunResult run_pipeline(const ExperimentManifest& manifest, const RunOptions& opts) {
    const auto errors = validate_manifest(manifest);
    if (!errors.empty()) {
        std::string msg = "invalid manifest:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw std::invalid_argument(msg);
    }

    PipelineState st;
    st.m = manifest;
    st.seed = opts.seed_override ? opts.seed_override : manifest.seed;
    st.resume = opts.resume;
    st.dataset = SyntheticStripesDataset(st.seed, static_cast<std::size_t>(manifest.dataset.height),
                                         static_cast<std::size_t>(manifest.dataset.width));

    ExperimentManifest effective = manifest;
    effective.seed = st.seed;
    const std::string digest = manifest_digest(effective);
    st.run_dir = fs::path(opts.out_dir) / digest;
    for (const char* d : {"checkpoints", "tables", "figures", "lattices", "logs"})
        fs::create_directories(st.run_dir / d);

    const fs::path record_path = st.run_dir / "run.json";
    if (opts.resume && fs::exists(record_path)) {
        std::ifstream f(record_path);
        f >> st.record;
        if (st.record.value("manifest_digest", "") != digest)
            throw std::invalid_argument("resume: run.json belongs to a different manifest");
    }
    st.record["manifest_digest"] = digest;
    st.record["manifest"] = manifest_to_json(effective);
    st.record["seed"] = st.seed;
    st.record["environment"] = env_fingerprint();
    if (!st.record.contains("stages")) st.record["stages"] = json::object();

    atomic_write_text(st.run_dir / "manifest.json", manifest_to_json(effective).dump(2) + "\n");

    const auto& stages = pipeline_stages();
    for (const auto& stage : stages) {
        if (stage == "train-classifiers")
            run_stage(st, stage, [&] { return stage_train_classifiers(st); });
        else if (stage == "pretrain")
            run_stage(st, stage, [&] { return stage_pretrain(st); });
        else if (stage == "finetune")
            run_stage(st, stage, [&] { return stage_finetune(st); });
        else if (stage == "eval-matrix")
            run_stage(st, stage, [&] { return stage_eval_matrix(st); });
        else if (stage == "noise-sweep")
            run_stage(st, stage, [&] { return stage_noise_sweep(st); });
        else if (stage == "rrc")
            run_stage(st, stage, [&] { return stage_rrc(st); });
        else if (stage == "fca")
            run_stage(st, stage, [&] { return stage_fca(st); });
        else if (stage == "nmi")
            run_stage(st, stage, [&] { return stage_nmi(st); });
        else if (stage == "report")
            run_stage(st, stage, [&] { return stage_report(st); });
        if (!opts.stop_after.empty() && stage == opts.stop_after) break;
    }
    save_run_record(st);
    return {st.run_dir.string(), st.record};
}

}  // namespace sigquant
