// Command-line driver for the signal-quantification pipeline.
//
// Every subcommand runs the staged pipeline through the requested stage;
// completed stages are skipped when --resume is given and their artifacts
// still verify. Exit codes: 0 success, 1 usage/configuration error,
// 2 invariant breach.
#include <cstdlib>
#include <cstring>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sigquant/finetune.hpp"
#include "sigquant/manifest.hpp"
#include "sigquant/pipeline.hpp"

namespace {

struct CommonArgs {
    std::string manifest_path;
    std::string out_dir = "runs";
    std::uint64_t seed = 0;
    bool resume = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--manifest", args.manifest_path, "Experiment manifest (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", args.out_dir, "Output root directory");
    cmd->add_option("--seed", args.seed, "Override the manifest seed (0 = keep)");
    cmd->add_flag("--resume", args.resume, "Skip stages whose artifacts verify");
}

int execute(const CommonArgs& args, const std::string& stop_after) {
    const char* dev = std::getenv("SIGQUANT_DEVICE");
    if (dev && std::strcmp(dev, "cpu") != 0) {
        std::cerr << "error: unsupported SIGQUANT_DEVICE '" << dev << "' (only 'cpu')\n";
        return 1;
    }
    sigquant::ExperimentManifest manifest = sigquant::load_manifest(args.manifest_path);
    const auto errors = sigquant::validate_manifest(manifest);
    if (!errors.empty()) {
        std::cerr << "invalid manifest:\n";
        for (const auto& e : errors) std::cerr << "  - " << e << "\n";
        return 1;
    }
    sigquant::RunOptions opts;
    opts.out_dir = args.out_dir;
    opts.seed_override = args.seed;
    opts.resume = args.resume;
    opts.stop_after = stop_after;
    const auto result = sigquant::run_pipeline(manifest, opts);
    std::cout << "run directory: " << result.run_dir << "\n";
    for (const auto& stage : sigquant::pipeline_stages()) {
        if (!result.record["stages"].contains(stage)) continue;
        const auto& rec = result.record["stages"][stage];
        std::cout << "  " << stage << ": " << rec.value("status", "?")
                  << (rec.value("resumed", false) ? " (resumed)" : "") << "\n";
        if (!stop_after.empty() && stage == stop_after) break;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sigquant: classifier input-signal quantification pipeline"};
    app.require_subcommand(1);

    // subcommand name -> last pipeline stage it runs
    const std::vector<std::pair<std::string, std::string>> commands = {
        {"pretrain", "pretrain"},
        {"finetune", "finetune"},
        {"eval-matrix", "eval-matrix"},
        {"noise-sweep", "noise-sweep"},
        {"rrc", "rrc"},
        {"fca", "fca"},
        {"nmi", "nmi"},
        {"report", "report"},
        {"run", ""},
    };

    std::vector<CommonArgs> args(commands.size());
    for (std::size_t i = 0; i < commands.size(); ++i) {
        CLI::App* cmd = app.add_subcommand(
            commands[i].first, commands[i].second.empty()
                                   ? "Run the full pipeline"
                                   : "Run the pipeline through the " + commands[i].first +
                                         " stage");
        add_common(cmd, args[i]);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        for (std::size_t i = 0; i < commands.size(); ++i)
            if (app.get_subcommand(commands[i].first)->parsed())
                return execute(args[i], commands[i].second);
        return 1;
    } catch (const sigquant::InvariantBreach& e) {
        std::cerr << "invariant breach: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
