// Command line front end: fetch datasets, run experiment plans, and turn
// result stores into summaries, reports, and figures.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "nnprof/analysis.hpp"
#include "nnprof/errors.hpp"
#include "nnprof/fetch.hpp"
#include "nnprof/orchestrator.hpp"
#include "nnprof/plan.hpp"
#include "nnprof/report.hpp"
#include "nnprof/store.hpp"
#include "nnprof/svg_plot.hpp"

namespace {

using namespace nnprof;

std::atomic<bool> g_interrupted{false};

void handle_sigint(int) { g_interrupted.store(true); }

// exit codes: 0 success, 2 usage or validation, 3 missing prerequisites,
// 4 runtime failure
constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kMissing = 3;
constexpr int kRuntime = 4;
constexpr int kInterrupted = 130;

struct RunArgs {
    std::string plan_path;
    std::string store_path;
    std::string data_dir = "data";
    int workers = 1;
    int repetitions = 0;
    bool repetitions_given = false;
    bool toy = false;
};

void add_run_options(CLI::App* cmd, RunArgs& args) {
    cmd->add_option("--plan", args.plan_path, "experiment plan JSON file")->required();
    cmd->add_option("--store", args.store_path, "result store to append to")->required();
    cmd->add_option("--data-dir", args.data_dir, "dataset cache directory")
        ->envname("NNPROF_DATA_DIR");
    cmd->add_option("--workers", args.workers, "parallel training workers");
    cmd->add_option("--repetitions", args.repetitions, "seeds per configuration")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--toy", args.toy,
                  "subsample 200 train / 50 test images per class and default to "
                  "3 repetitions, for quick runs");
}

void add_threshold_options(CLI::App* cmd, AnalysisThresholds& th) {
    cmd->add_option("--std-tau", th.std_tau, "max accuracy std for a stable point");
    cmd->add_option("--gain-tau", th.gain_tau,
                    "train-test gap increase that signals overfitting");
    cmd->add_option("--overfit-tau", th.overfit_tau,
                    "accuracy drop from the running best that signals overfitting");
    cmd->add_option("--prune-delta", th.prune_delta,
                    "accuracy give-back allowed against the unpruned baseline");
}

// Post-run digest: per-capacity mean and std for everything this plan wrote.
void print_run_summary(const ResultStore& store, const ExperimentPlan& plan) {
    RecordFilter filter;
    filter.phase = plan.phase;
    std::map<std::tuple<std::string, int, int, std::string>, std::vector<RunRecord>> groups;
    for (const StoredRun& run : query(store, filter))
        if (run.plan_id == plan.id)
            groups[{run.record.spec.dataset, static_cast<int>(run.record.spec.family),
                    run.record.spec.hidden_layers, run.record.variant}]
                .push_back(run.record);
    for (auto& [key, records] : groups) {
        const ModelSpec& spec = records.front().spec;
        std::cout << spec.dataset << " " << family_str(spec.family);
        if (spec.family == Family::MLP) std::cout << " L" << spec.hidden_layers;
        if (plan.phase == Phase::QUANT) std::cout << " " << records.front().variant;
        std::cout << ":\n";
        for (const CapacityPoint& pt : build_sweep(records).points) {
            char line[120];
            std::snprintf(line, sizeof(line),
                          "  capacity %lld: mean %.4f std %.4f (%d runs)\n",
                          static_cast<long long>(pt.capacity), pt.mean_accuracy,
                          pt.std_accuracy, pt.runs);
            std::cout << line;
        }
    }
}

int cmd_run_phase(const RunArgs& args, const char* cmd_name) {
    ExperimentPlan plan = load_plan(args.plan_path);

    const std::string cmd = cmd_name;
    if (cmd == "sweep") {
        if (plan.phase != Phase::FIRST_PHASE && plan.phase != Phase::SECOND_PHASE)
            throw ValidationError("plan declares phase " + phase_str(plan.phase) +
                                  "; the sweep command runs FIRST_PHASE or "
                                  "SECOND_PHASE plans");
    } else {
        const Phase forced = cmd == "prune" ? Phase::PRUNE : Phase::QUANT;
        if (plan.phase != forced) {
            std::cerr << "note: plan declares phase " << phase_str(plan.phase)
                      << "; running " << phase_str(forced) << "\n";
            plan.phase = forced;
        }
    }
    if (args.repetitions_given)
        plan.repetitions = args.repetitions;
    else if (args.toy)
        plan.repetitions = plan.repetitions == 0 ? 3 : std::min(plan.repetitions, 3);
    plan.validate();

    const std::filesystem::path store_path(args.store_path);
    if (store_path.has_parent_path())
        std::filesystem::create_directories(store_path.parent_path());
    ResultStore store = ResultStore::open(args.store_path);

    RunPlanOptions opt;
    opt.worker_count = args.workers;
    opt.data_dir = args.data_dir;
    if (args.toy) {
        opt.toy_train_per_class = 200;
        opt.toy_test_per_class = 50;
    }
    opt.progress = [](const std::string& line) { std::cout << line << "\n"; };
    opt.should_stop = [] { return g_interrupted.load(); };

    std::signal(SIGINT, handle_sigint);
    const RunPlanStats stats = run_plan(plan, store, opt);
    std::signal(SIGINT, SIG_DFL);

    std::cout << "executed " << stats.executed << ", skipped " << stats.skipped
              << ", failed " << stats.failed << "\n";
    if (stats.stopped) {
        std::cout << "interrupted; the store holds a clean prefix, rerun the same "
                     "command to resume\n";
        return kInterrupted;
    }
    print_run_summary(store, plan);
    return stats.failed == 0 ? kOk : kRuntime;
}

int cmd_fetch(const std::vector<std::string>& names, const std::string& data_dir,
              bool allow_unverified) {
    FetchOptions opt;
    opt.data_dir = data_dir;
    opt.allow_unverified = allow_unverified;
    opt.log = [](const std::string& line) { std::cout << line << "\n"; };
    std::vector<std::string> wanted = names;
    if (wanted.empty())
        for (const auto& [name, files] : default_manifest().datasets)
            wanted.push_back(name);
    const int downloaded = fetch_datasets(wanted, opt);
    if (downloaded == 0)
        std::cout << "all files already cached\n";
    else
        std::cout << "downloaded " << downloaded << " archive(s)\n";
    return kOk;
}

int cmd_analyze(const std::string& store_path, const AnalysisThresholds& th) {
    const ResultStore store = ResultStore::open(store_path, /*read_only=*/true);
    const ReportBundle bundle = build_report(store, th);
    std::cout << bundle.summary_text;
    if (!bundle.details_text.empty()) std::cout << "\n" << bundle.details_text;
    return kOk;
}

int cmd_report(const std::string& store_path, const std::string& out_dir,
               const AnalysisThresholds& th) {
    const ResultStore store = ResultStore::open(store_path, /*read_only=*/true);
    write_report(build_report(store, th), out_dir);
    std::cout << "wrote summary.txt, summary.tsv, and cells.txt under " << out_dir
              << "\n";
    return kOk;
}

int cmd_plot(const std::string& store_path, const std::string& kind,
             const std::string& out_dir) {
    const ResultStore store = ResultStore::open(store_path, /*read_only=*/true);
    const PlotSpec spec = plot_of_kind(store, kind);
    std::filesystem::create_directories(out_dir);
    const auto write = [&](const std::string& name, const std::string& body) {
        const std::filesystem::path path = std::filesystem::path(out_dir) / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigurationError("cannot write " + path.string());
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
        std::cout << "wrote " << path.string() << "\n";
    };
    write(kind + ".svg", render_svg(spec));
    write(kind + ".csv", render_csv(spec));
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Profiler for minimal neural networks: capacity sweeps, pruning and "
        "quantization studies, and regime reports over MNIST-class datasets"};
    app.require_subcommand(1);

    auto* fetch = app.add_subcommand("fetch", "download and verify dataset archives");
    std::vector<std::string> fetch_names;
    std::string fetch_data_dir = "data";
    bool allow_unverified = false;
    fetch->add_option("datasets", fetch_names,
                      "dataset names (default: every known dataset)");
    fetch->add_option("--data-dir", fetch_data_dir, "dataset cache directory")
        ->envname("NNPROF_DATA_DIR");
    fetch->add_flag("--allow-unverified", allow_unverified,
                    "fetch files that have no pinned digest");

    RunArgs sweep_args, prune_args, quant_args;
    auto* sweep = app.add_subcommand("sweep", "train the plan's capacity grid");
    add_run_options(sweep, sweep_args);
    auto* prune = app.add_subcommand("prune", "train and measure one-shot pruning curves");
    add_run_options(prune, prune_args);
    auto* quantize =
        app.add_subcommand("quantize", "train fp32 and 8-bit observer-quantized pairs");
    add_run_options(quantize, quant_args);

    std::string analyze_store;
    AnalysisThresholds analyze_th;
    auto* analyze = app.add_subcommand("analyze", "print the summary table and details");
    analyze->add_option("--store", analyze_store, "result store to read")->required();
    add_threshold_options(analyze, analyze_th);

    std::string report_store, report_out = "report";
    AnalysisThresholds report_th;
    auto* report = app.add_subcommand("report", "write the summary and per-cell files");
    report->add_option("--store", report_store, "result store to read")->required();
    report->add_option("--out", report_out, "output directory");
    add_threshold_options(report, report_th);

    std::string plot_store, plot_kind, plot_out = "plots";
    auto* plot = app.add_subcommand("plot", "render a figure and its data table");
    plot->add_option("--store", plot_store, "result store to read")->required();
    plot->add_option("--kind", plot_kind, "convergence, pruning, or quantization")
        ->required();
    plot->add_option("--out", plot_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    sweep_args.repetitions_given = sweep->count("--repetitions") > 0;
    prune_args.repetitions_given = prune->count("--repetitions") > 0;
    quant_args.repetitions_given = quantize->count("--repetitions") > 0;

    try {
        if (*fetch) return cmd_fetch(fetch_names, fetch_data_dir, allow_unverified);
        if (*sweep) return cmd_run_phase(sweep_args, "sweep");
        if (*prune) return cmd_run_phase(prune_args, "prune");
        if (*quantize) return cmd_run_phase(quant_args, "quantize");
        if (*analyze) return cmd_analyze(analyze_store, analyze_th);
        if (*report) return cmd_report(report_store, report_out, report_th);
        if (*plot) return cmd_plot(plot_store, plot_kind, plot_out);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const ConfigurationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kMissing;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kRuntime;
    }
    return kUsage;
}
