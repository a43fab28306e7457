// uqbench command-line driver.
//
//   uqbench classify --manifest m.json [--config c.json] [--out dir] ...
//   uqbench ensemble ...     (uncertainty table + ensemble saliency maps)
//   uqbench perturb ...      (robustness table + before/after maps)
//   uqbench saliency ...     (ensemble saliency maps only)
//   uqbench run ...          (every experiment listed in the config)
//   uqbench report --input table.csv --format markdown
//
// Exit codes: 0 success, 1 partial failure, 2 invalid input.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "uqbench/runner/experiments.hpp"

#ifndef UQBENCH_DEFAULT_LABELS
#define UQBENCH_DEFAULT_LABELS "data/imagenet_labels.tsv"
#endif

namespace {

namespace fs = std::filesystem;
using namespace uqbench;

constexpr int exit_ok = 0;
constexpr int exit_partial = 1;
constexpr int exit_invalid = 2;

struct SharedOptions {
    std::string manifest;
    std::string config;
    std::string out;
    std::string weights_dir;
    std::string cache_dir;
    std::string weights;
    std::string labels;
    std::string format = "csv";
    std::vector<std::string> members;
    std::optional<std::uint64_t> seed;
    std::optional<int> samples;
};

void add_shared(CLI::App& cmd, SharedOptions& o, bool needs_manifest) {
    auto* m = cmd.add_option("--manifest", o.manifest, "Image manifest (JSON)");
    if (needs_manifest) {
        m->required();
    }
    cmd.add_option("--config", o.config, "Run configuration (JSON)");
    cmd.add_option("--out", o.out, "Output directory");
    cmd.add_option("--weights-dir", o.weights_dir, "Directory holding exported weights");
    cmd.add_option("--cache-dir", o.cache_dir, "Probability/saliency cache directory");
    cmd.add_option("--weights", o.weights, "Weights source: torchvision, seeded:<n>, file:<path>");
    cmd.add_option("--labels", o.labels, "Label catalog (TSV)");
    cmd.add_option("--format", o.format, "Report format")->check(CLI::IsMember({"csv", "markdown", "md"}));
    cmd.add_option("--members", o.members, "Ensemble members (default: all five)");
    cmd.add_option("--seed", o.seed, "SmoothGrad noise seed");
    cmd.add_option("--samples", o.samples, "SmoothGrad sample count");
}

RunConfig make_config(const SharedOptions& o) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_config(o.config);
    if (!o.out.empty()) c.output_dir = o.out;
    if (!o.cache_dir.empty()) c.cache_dir = o.cache_dir;
    if (!o.weights_dir.empty()) c.weights_dir = o.weights_dir;
    if (!o.weights.empty()) c.weights_source.id = o.weights;
    if (!o.labels.empty()) c.labels = o.labels;
    if (!o.members.empty()) {
        c.members.clear();
        for (const auto& m : o.members) {
            c.members.push_back(parse_member(m));
        }
    }
    if (o.seed) c.saliency_params.seed = *o.seed;
    if (o.samples) c.saliency_params.n_samples = *o.samples;
    if (c.labels.empty()) c.labels = UQBENCH_DEFAULT_LABELS;
    c.validate();
    return c;
}

int finish(const Runner& runner, const RunResult& result) {
    for (const auto& f : result.files) {
        std::cout << "wrote " << f.string() << '\n';
    }
    const auto& s = runner.stats();
    std::cout << "model invocations: " << s.model_invocations << ", cache hits: " << s.cache_hits
              << ", cache misses: " << s.cache_misses << '\n';
    for (const auto& f : result.failures) {
        std::cerr << "error: image '" << f.image_id << "'";
        if (f.experiment > 0) std::cerr << " (experiment " << f.experiment << ")";
        std::cerr << ": " << f.message << '\n';
    }
    if (result.partial()) {
        std::cerr << result.failures.size() << " image failure(s)\n";
        return exit_partial;
    }
    return exit_ok;
}

int run_command(const std::string& name, const SharedOptions& o, const std::string& target) {
    RunConfig config = make_config(o);
    LabelCatalog catalog = load_label_catalog(config.labels);
    const Manifest manifest = load_manifest(o.manifest, catalog);
    if (name == "run" && o.config.empty()) {
        config.experiments = {1, 2, 3};
    }
    Runner runner(std::move(config), std::move(catalog), parse_report_format(o.format));
    RunResult result;
    if (name == "classify") {
        result = runner.run_experiment(manifest, 1);
    } else if (name == "ensemble") {
        result = runner.run_experiment(manifest, 2);
    } else if (name == "perturb") {
        result = runner.run_experiment(manifest, 3);
    } else if (name == "saliency") {
        std::optional<ClassIndex> cls;
        if (!target.empty()) {
            cls = runner.catalog().resolve(target);
        }
        result = runner.saliency_maps(manifest, {}, cls);
    } else {
        result = runner.run(manifest);
    }
    return finish(runner, result);
}

int report_command(const std::string& input, const std::string& output, const std::string& format) {
    const ReportTable table = read_csv_report(input);
    const ReportFormat f = parse_report_format(format);
    if (output.empty()) {
        std::cout << render(table, f);
    } else {
        emit_report(table, f, output);
    }
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ensemble uncertainty, robustness and saliency benchmark"};
    app.require_subcommand(1);

    SharedOptions shared;
    std::string target;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"classify", "Per-model predictions, voting outcomes and accuracy"},
        {"ensemble", "Ensemble uncertainty ranking and saliency maps"},
        {"perturb", "Prediction robustness under image perturbations"},
        {"saliency", "Ensemble SmoothGrad maps for every manifest image"},
        {"run", "Every experiment listed in the configuration"},
    };
    std::vector<CLI::App*> runners;
    for (const auto& [name, help] : commands) {
        auto* cmd = app.add_subcommand(name, help);
        add_shared(*cmd, shared, true);
        if (name == "saliency") {
            cmd->add_option("--target", target, "Explain this class instead of the ensemble decision");
        }
        runners.push_back(cmd);
    }

    std::string input, output, format = "markdown";
    auto* report = app.add_subcommand("report", "Re-render a CSV report as CSV or Markdown");
    report->add_option("--input", input, "CSV report")->required();
    report->add_option("--output", output, "Destination (default: stdout)");
    report->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "markdown", "md"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_invalid;
    }

    try {
        if (report->parsed()) {
            return report_command(input, output, format);
        }
        for (auto* cmd : runners) {
            if (cmd->parsed()) {
                return run_command(cmd->get_name(), shared, target);
            }
        }
        return exit_invalid;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        switch (e.kind()) {
        case ErrorKind::invalid_input:
        case ErrorKind::out_of_range:
        case ErrorKind::shape_mismatch: return exit_invalid;
        default: return exit_partial;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_partial;
    }
}
