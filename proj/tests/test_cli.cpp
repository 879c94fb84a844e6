// Drives the installed command line binary as a subprocess and checks exit
// codes, output files, and resume behavior.

#include <doctest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
#ifdef NNPROF_BIN_PATH
    return NNPROF_BIN_PATH;
#else
    return std::getenv("NNPROF_BIN") ? std::getenv("NNPROF_BIN") : "";
#endif
}

bool have_mnist() {
    return fs::exists(fs::path(testutil::data_dir()) / "mnist" /
                      "train-images-idx3-ubyte");
}

struct CliResult {
    int exit_code = -1;
    std::string output;  // stdout and stderr interleaved
};

CliResult run_cli(const std::string& args, const testutil::TempDir& tmp) {
    const std::string out_path = tmp.file("cli-output.txt");
    const std::string cmd = cli_path() + " " + args + " > " + out_path + " 2>&1";
    const int status = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(out_path, std::ios::binary);
    r.output.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    return r;
}

void write_plan(const std::string& path, const std::string& phase,
                const std::string& caps = "[5, 8]") {
    std::ofstream out(path);
    out << "{\n"
        << "  \"version\": 1,\n"
        << "  \"id\": \"cli-test\",\n"
        << "  \"phase\": \"" << phase << "\",\n"
        << "  \"datasets\": [\"mnist\"],\n"
        << "  \"families\": [\"mlp\"],\n"
        << "  \"capacities\": {\"mlp\": " << caps << "},\n"
        << "  \"depths\": [1],\n"
        << "  \"repetitions\": 1,\n"
        << "  \"train\": {\"epochs\": 2, \"batch_size\": 20}\n"
        << "}\n";
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
    testutil::TempDir tmp("cli-usage");
    CHECK(run_cli("--help", tmp).exit_code == 0);
    CHECK(run_cli("", tmp).exit_code == 2);
    CHECK(run_cli("frobnicate", tmp).exit_code == 2);
    CHECK(run_cli("sweep --store " + tmp.file("s.store"), tmp).exit_code == 2);
    CHECK(run_cli("plot --store " + tmp.file("s.store"), tmp).exit_code == 2);
}

TEST_CASE("plan problems are reported field by field with exit 2") {
    testutil::TempDir tmp("cli-plan");

    SUBCASE("unknown plan field") {
        std::ofstream(tmp.file("bad.json"))
            << R"({"version": 1, "id": "x", "datasets": ["mnist"],
                   "families": ["mlp"], "repetions": 3})";
        const CliResult r = run_cli(
            "sweep --plan " + tmp.file("bad.json") + " --store " + tmp.file("s.store"),
            tmp);
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("repetions") != std::string::npos);
    }
    SUBCASE("sweep refuses a compression-phase plan") {
        write_plan(tmp.file("prune.json"), "PRUNE");
        const CliResult r = run_cli(
            "sweep --plan " + tmp.file("prune.json") + " --store " + tmp.file("s.store"),
            tmp);
        CHECK(r.exit_code == 2);
        CHECK(r.output.find("PRUNE") != std::string::npos);
    }
    SUBCASE("a missing plan file is a missing prerequisite") {
        const CliResult r = run_cli(
            "sweep --plan " + tmp.file("absent.json") + " --store " + tmp.file("s.store"),
            tmp);
        CHECK(r.exit_code == 3);
    }
}

TEST_CASE("reads of a missing store exit with code 3") {
    testutil::TempDir tmp("cli-missing");
    CHECK(run_cli("analyze --store " + tmp.file("none.store"), tmp).exit_code == 3);
    CHECK(run_cli("report --store " + tmp.file("none.store"), tmp).exit_code == 3);
    CHECK(run_cli("plot --store " + tmp.file("none.store") + " --kind convergence", tmp)
              .exit_code == 3);
}

TEST_CASE("fetch rejects unknown dataset names before touching the network") {
    testutil::TempDir tmp("cli-fetch");
    const CliResult r =
        run_cli("fetch not_a_dataset --data-dir " + tmp.file("data"), tmp);
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("not_a_dataset") != std::string::npos);
}

TEST_CASE("the full pipeline runs through the binary"
          * doctest::skip(!have_mnist())) {
    testutil::TempDir tmp("cli-pipeline");
    const std::string plan = tmp.file("plan.json");
    const std::string store = tmp.file("runs.store");
    const std::string common = " --plan " + plan + " --store " + store + " --data-dir " +
                               testutil::data_dir() + " --toy";
    write_plan(plan, "SECOND_PHASE");

    SUBCASE("sweep, rerun, analyze, report, and plot") {
        const CliResult sweep = run_cli("sweep" + common, tmp);
        CHECK(sweep.exit_code == 0);
        // plan repetitions stay in force; --toy only shrinks the data
        CHECK(sweep.output.find("executed 2, skipped 0, failed 0") != std::string::npos);
        CHECK(sweep.output.find("[1/2]") != std::string::npos);
        CHECK(sweep.output.find("capacity 5:") != std::string::npos);

        const CliResult rerun = run_cli("sweep" + common, tmp);
        CHECK(rerun.exit_code == 0);
        CHECK(rerun.output.find("executed 0, skipped 2, failed 0") != std::string::npos);

        const CliResult analyze = run_cli("analyze --store " + store, tmp);
        CHECK(analyze.exit_code == 0);
        CHECK(analyze.output.find("min_params") != std::string::npos);
        CHECK(analyze.output.find("== mnist / mlp ==") != std::string::npos);

        const CliResult report =
            run_cli("report --store " + store + " --out " + tmp.file("rep"), tmp);
        CHECK(report.exit_code == 0);
        CHECK(fs::exists(tmp.file("rep/summary.txt")));
        CHECK(fs::exists(tmp.file("rep/summary.tsv")));
        CHECK(fs::exists(tmp.file("rep/cells.txt")));

        const CliResult plot = run_cli(
            "plot --store " + store + " --kind convergence --out " + tmp.file("plots"),
            tmp);
        CHECK(plot.exit_code == 0);
        CHECK(fs::exists(tmp.file("plots/convergence.svg")));
        CHECK(fs::exists(tmp.file("plots/convergence.csv")));

        const CliResult bad_kind = run_cli(
            "plot --store " + store + " --kind histogram --out " + tmp.file("plots"),
            tmp);
        CHECK(bad_kind.exit_code == 2);

        // pruning records do not exist in this store yet
        const CliResult no_records = run_cli(
            "plot --store " + store + " --kind pruning --out " + tmp.file("plots"), tmp);
        CHECK(no_records.exit_code == 3);
    }

    SUBCASE("quantize writes fp32 and qat twins and prune writes curves") {
        const CliResult quant =
            run_cli("quantize" + common + " --repetitions 1", tmp);
        CHECK(quant.exit_code == 0);
        CHECK(quant.output.find("executed 4, skipped 0, failed 0") != std::string::npos);
        CHECK(quant.output.find("fp32") != std::string::npos);
        CHECK(quant.output.find("qat") != std::string::npos);

        const CliResult prune = run_cli("prune" + common + " --repetitions 1", tmp);
        CHECK(prune.exit_code == 0);
        CHECK(prune.output.find("executed 2, skipped 0, failed 0") != std::string::npos);

        const CliResult plot = run_cli(
            "plot --store " + store + " --kind pruning --out " + tmp.file("plots"), tmp);
        CHECK(plot.exit_code == 0);
        std::ifstream csv(tmp.file("plots/pruning.csv"));
        std::string line;
        int rows = 0;
        while (std::getline(csv, line)) ++rows;
        CHECK(rows == 1 + 2 * 10);  // header, then ten rates for each capacity
    }

    SUBCASE("a missing dataset cache names the fetch command with exit 3") {
        const CliResult r = run_cli("sweep --plan " + plan + " --store " + store +
                                        " --data-dir " + tmp.file("empty-cache"),
                                    tmp);
        CHECK(r.exit_code == 3);
        CHECK(r.output.find("fetch") != std::string::npos);
    }
}
