#include <vector>

#include "doctest.h"
#include "nnprof/analysis.hpp"
#include "nnprof/errors.hpp"
#include "nnprof/rng.hpp"

using namespace nnprof;

namespace {

SweepResult sweep_from(const std::vector<float>& means, const std::vector<float>& stds,
                       const std::vector<float>& gaps = {}) {
    SweepResult sr;
    sr.family = Family::MLP;
    sr.dataset = "mnist";
    for (std::size_t i = 0; i < means.size(); ++i) {
        CapacityPoint pt;
        pt.capacity = static_cast<std::int64_t>(i + 1);
        pt.param_count = static_cast<std::int64_t>(1000 * (i + 1));
        pt.mean_accuracy = means[i];
        pt.std_accuracy = stds[i];
        pt.train_test_gap = gaps.empty() ? 0.0f : gaps[i];
        pt.runs = 5;
        sr.points.push_back(pt);
    }
    return sr;
}

PruneProfile profile_from(const std::vector<double>& rates, const std::vector<float>& means,
                          float baseline) {
    PruneProfile pp;
    pp.rates = rates;
    pp.mean_accuracy = means;
    pp.std_accuracy.assign(means.size(), 0.0f);
    pp.baseline_mean = baseline;
    return pp;
}

RunRecord record_of(std::int64_t capacity, float test_acc, float train_acc,
                    bool diverged = false) {
    RunRecord r;
    r.spec.family = Family::MLP;
    r.spec.dataset = "mnist";
    r.spec.capacity = capacity;
    r.param_count = capacity * 100;
    r.test_accuracy = test_acc;
    r.train_accuracy = train_acc;
    r.diverged = diverged;
    return r;
}

}  // namespace

TEST_CASE("regimes split unstable from learning") {
    SweepResult sr = sweep_from({0.2f, 0.5f, 0.9f, 0.91f}, {0.15f, 0.1f, 0.01f, 0.01f});
    auto labels = detect_regimes(sr);
    REQUIRE(labels.size() == 4);
    CHECK(labels[0] == Regime::UNSTABLE);
    CHECK(labels[1] == Regime::UNSTABLE);
    CHECK(labels[2] == Regime::LEARNING);
    CHECK(labels[3] == Regime::LEARNING);
}

TEST_CASE("constant zero-variance sweep is all learning") {
    SweepResult sr = sweep_from({0.8f, 0.8f, 0.8f}, {0.0f, 0.0f, 0.0f});
    for (Regime r : detect_regimes(sr)) CHECK(r == Regime::LEARNING);
}

TEST_CASE("accuracy drop with a rising gap flags overfitting") {
    SweepResult sr =
        sweep_from({0.9f, 0.91f, 0.87f}, {0.01f, 0.01f, 0.01f}, {0.01f, 0.01f, 0.08f});
    auto labels = detect_regimes(sr);
    CHECK(labels[0] == Regime::LEARNING);
    CHECK(labels[1] == Regime::LEARNING);
    CHECK(labels[2] == Regime::OVERFITTING);
}

TEST_CASE("a drop without gap growth stays learning") {
    SweepResult sr =
        sweep_from({0.9f, 0.91f, 0.87f}, {0.01f, 0.01f, 0.01f}, {0.01f, 0.01f, 0.01f});
    auto labels = detect_regimes(sr);
    CHECK(labels[2] == Regime::LEARNING);
}

TEST_CASE("overfitting is sticky once it starts") {
    SweepResult sr = sweep_from({0.9f, 0.91f, 0.87f, 0.91f}, {0.01f, 0.01f, 0.01f, 0.01f},
                                {0.01f, 0.01f, 0.08f, 0.01f});
    auto labels = detect_regimes(sr);
    CHECK(labels[2] == Regime::OVERFITTING);
    CHECK(labels[3] == Regime::OVERFITTING);
}

TEST_CASE("sweeps that never stabilize are fully unstable") {
    SweepResult sr = sweep_from({0.3f, 0.4f, 0.5f}, {0.2f, 0.2f, 0.2f});
    for (Regime r : detect_regimes(sr)) CHECK(r == Regime::UNSTABLE);
}

TEST_CASE("regime detection needs three points") {
    SweepResult sr = sweep_from({0.5f, 0.6f}, {0.0f, 0.0f});
    CHECK_THROWS_AS(detect_regimes(sr), ValidationError);
}

TEST_CASE("labels ignore the capacity axis scale") {
    SweepResult sr = sweep_from({0.2f, 0.9f, 0.91f}, {0.2f, 0.01f, 0.01f});
    auto before = detect_regimes(sr);
    for (auto& p : sr.points) {
        p.capacity *= 1000;
        p.param_count *= 7;
    }
    CHECK(detect_regimes(sr) == before);
}

TEST_CASE("one significant figure rounding") {
    CHECK(round_one_sig_fig(23456) == 20000);
    CHECK(round_one_sig_fig(54170) == 50000);
    CHECK(round_one_sig_fig(95000) == 100000);
    CHECK(round_one_sig_fig(272) == 300);
    CHECK(round_one_sig_fig(1) == 1);
    CHECK(round_one_sig_fig(9) == 9);
    CHECK(round_one_sig_fig(10) == 10);
    CHECK(round_one_sig_fig(15) == 2 * 10);
}

TEST_CASE("minimal stable parameters come from the first learning point") {
    SweepResult sr = sweep_from({0.2f, 0.9f, 0.91f}, {0.2f, 0.01f, 0.01f});
    sr.points[1].param_count = 23456;
    auto labels = detect_regimes(sr);
    MinStableParams msp = min_stable_params(sr, labels);
    CHECK(msp.stable);
    CHECK(msp.raw == 23456);
    CHECK(msp.rounded == 20000);

    SweepResult wild = sweep_from({0.3f, 0.4f, 0.5f}, {0.2f, 0.2f, 0.2f});
    MinStableParams none = min_stable_params(wild, detect_regimes(wild));
    CHECK(!none.stable);

    CHECK_THROWS_AS(min_stable_params(sr, std::vector<Regime>{Regime::LEARNING}),
                    ValidationError);
}

TEST_CASE("safe pruning keeps the largest rate near baseline") {
    PruneProfile pp = profile_from({0.1, 0.2, 0.3, 0.4},
                                   {0.98f, 0.975f, 0.97f, 0.90f}, 0.98f);
    CHECK(safe_pruning_pct(pp) == 30);

    PruneProfile all_fine = profile_from({0.1, 0.5, 1.0}, {0.97f, 0.97f, 0.97f}, 0.98f);
    CHECK(safe_pruning_pct(all_fine) == 100);

    PruneProfile none = profile_from({0.1, 0.2}, {0.5f, 0.4f}, 0.98f);
    CHECK(safe_pruning_pct(none) == 0);
}

TEST_CASE("safe pruning grows with a looser tolerance") {
    Rng rng(3, "safe-prune-mono");
    for (int trial = 0; trial < 50; ++trial) {
        PruneProfile pp;
        pp.baseline_mean = 0.9f + 0.1f * static_cast<float>(rng.next_double());
        for (int i = 1; i <= 10; ++i) {
            pp.rates.push_back(i / 10.0);
            pp.mean_accuracy.push_back(
                static_cast<float>(rng.next_double()) * pp.baseline_mean);
        }
        const double d1 = 0.01 + 0.2 * rng.next_double();
        const double d2 = d1 + 0.2 * rng.next_double();
        CHECK(safe_pruning_pct(pp, d2) >= safe_pruning_pct(pp, d1));
    }
}

TEST_CASE("pruning phases band a sigmoid-shaped profile") {
    PruneProfile pp = profile_from(
        default_prune_rates(),
        {0.98f, 0.978f, 0.97f, 0.9f, 0.6f, 0.3f, 0.16f, 0.14f, 0.12f, 0.1f}, 0.98f);
    auto phases = pruning_phases(pp);
    using P = PrunePhase;
    std::vector<P> expect = {P::REDUNDANT, P::REDUNDANT, P::REDUNDANT,
                             P::TRANSITION, P::TRANSITION, P::TRANSITION, P::TRANSITION,
                             P::COLLAPSED, P::COLLAPSED, P::COLLAPSED};
    CHECK(phases == expect);
}

TEST_CASE("flat profile that ends at chance has no transition band") {
    std::vector<float> accs(10, 0.98f);
    accs.back() = 0.1f;
    PruneProfile pp = profile_from(default_prune_rates(), accs, 0.98f);
    auto phases = pruning_phases(pp);
    for (std::size_t i = 0; i + 1 < phases.size(); ++i)
        CHECK(phases[i] == PrunePhase::REDUNDANT);
    CHECK(phases.back() == PrunePhase::COLLAPSED);
}

TEST_CASE("noise after the first crossing does not reopen the prefix") {
    PruneProfile pp = profile_from({0.1, 0.2, 0.3, 0.4},
                                   {0.98f, 0.90f, 0.975f, 0.1f}, 0.98f);
    auto phases = pruning_phases(pp);
    CHECK(phases[0] == PrunePhase::REDUNDANT);
    CHECK(phases[1] == PrunePhase::TRANSITION);
    CHECK(phases[2] == PrunePhase::TRANSITION);  // back within delta, still transition
    CHECK(phases[3] == PrunePhase::COLLAPSED);
}

TEST_CASE("sweep aggregation groups and orders by capacity") {
    std::vector<RunRecord> records = {
        record_of(10, 0.9f, 0.95f), record_of(1, 0.3f, 0.3f),  record_of(10, 0.8f, 0.9f),
        record_of(1, 0.5f, 0.5f),   record_of(1, 0.1f, 0.1f, true),
    };
    SweepResult sr = build_sweep(records);
    REQUIRE(sr.points.size() == 2);
    CHECK(sr.points[0].capacity == 1);
    CHECK(sr.points[0].runs == 3);
    CHECK(sr.points[0].mean_accuracy == doctest::Approx(0.3f));
    CHECK(sr.points[0].diverged_fraction == doctest::Approx(1.0f / 3.0f));
    CHECK(sr.points[1].capacity == 10);
    CHECK(sr.points[1].mean_accuracy == doctest::Approx(0.85f));
    CHECK(sr.points[1].std_accuracy == doctest::Approx(0.05f));
    CHECK(sr.points[1].train_test_gap == doctest::Approx(0.075f));
    CHECK(sr.points[1].param_count == 1000);

    auto pairs = capacity_accuracy(sr);
    CHECK(pairs[0].first == 1);
    CHECK(pairs[1].second == doctest::Approx(0.85f));

    auto bad = records;
    bad.push_back(RunRecord{});
    bad.back().spec.dataset = "cifar10";
    CHECK_THROWS_AS(build_sweep(bad), ValidationError);
    CHECK_THROWS_AS(build_sweep({}), ValidationError);
}

TEST_CASE("summary gap picks the stable capacity or falls back to the largest") {
    QuantProfile qp = quant_gap({{1, 0.5f}, {10, 0.9f}, {100, 0.98f}},
                                {{1, 0.4f}, {10, 0.89f}, {100, 0.975f}});
    CHECK(summary_gap(qp, 10) == doctest::Approx(1.0f).epsilon(1e-3));
    CHECK(summary_gap(qp, -1) == doctest::Approx(0.5f).epsilon(1e-3));
    CHECK_THROWS_AS(summary_gap(qp, 7), ValidationError);
    CHECK_THROWS_AS(summary_gap(QuantProfile{}, 1), ValidationError);
}

TEST_CASE("summary table emits one row per cell and flags gaps") {
    std::vector<CellReport> cells;
    for (const char* ds : {"mnist", "fashion_mnist", "cifar10"})
        for (Family f : {Family::MLP, Family::CNN, Family::VIT}) {
            CellReport cell;
            cell.dataset = ds;
            cell.family = f;
            cell.report.labels = {Regime::LEARNING};
            cell.report.min_stable.stable = true;
            cell.report.min_stable.raw = 23456;
            cell.report.min_stable.rounded = 20000;
            cell.report.safe_pruning = 60;
            cell.report.has_gap = true;
            cell.report.gap_8bit_pp = 0.15f;
            cells.push_back(cell);
        }
    SummaryTable table = summarize_table(cells);
    REQUIRE(table.rows.size() == 9);
    CHECK(table.warnings.empty());
    CHECK(table.rows[0].min_params == "20000");
    CHECK(table.rows[0].safe_pruning == "60");
    CHECK(table.rows[0].gap_pp == "0.15");

    CHECK(summarize_table({}).rows.empty());

    CellReport missing;
    missing.dataset = "mnist";
    missing.family = Family::CNN;
    missing.report.labels = {Regime::UNSTABLE};
    SummaryTable partial = summarize_table({missing});
    CHECK(partial.rows[0].min_params == "NOT_STABLE");
    CHECK(partial.rows[0].safe_pruning == "N/A");
    CHECK(partial.rows[0].gap_pp == "N/A");
    CHECK(partial.warnings.size() == 2);
}
