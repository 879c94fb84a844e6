#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nnprof/models.hpp"
#include "nnprof/prune.hpp"
#include "nnprof/quant.hpp"
#include "nnprof/trainer.hpp"

namespace nnprof {

enum class Regime { UNSTABLE, LEARNING, OVERFITTING };
std::string regime_str(Regime r);

// One capacity grid entry, aggregated across seeds.
struct CapacityPoint {
    std::int64_t capacity = 0;
    std::int64_t param_count = 0;
    float mean_accuracy = 0.0f;
    float std_accuracy = 0.0f;
    float diverged_fraction = 0.0f;
    float train_test_gap = 0.0f;  // mean of train accuracy minus test accuracy
    int runs = 0;
};

struct SweepResult {
    Family family = Family::MLP;
    std::string dataset;
    std::vector<CapacityPoint> points;  // strictly increasing capacity
};

// Group records by capacity and aggregate. Records must all share one
// family and dataset; diverged runs count toward the statistics since the
// instability they carry is the signal being measured.
SweepResult build_sweep(const std::vector<RunRecord>& records);

// (capacity, mean accuracy) pairs, the shape quant_gap consumes.
std::vector<std::pair<std::int64_t, float>> capacity_accuracy(const SweepResult& sr);

struct AnalysisThresholds {
    double std_tau = 0.02;      // max accuracy std for a stable point
    double gain_tau = 0.005;    // min train-test gap increase to call overfitting
    double overfit_tau = 0.01;  // min drop from the running best accuracy
    double prune_delta = 0.02;  // accuracy give-back allowed vs baseline
};

// Label each capacity point. Stability requires low std and a mean within
// 0.02 of the sweep's plateau; the first such contiguous run opens the
// LEARNING band and everything before it is UNSTABLE. After the band opens,
// a drop of more than overfit_tau below the running best accuracy combined
// with a train-test gap more than gain_tau above the gap at that best point
// flips the rest of the axis to OVERFITTING.
std::vector<Regime> detect_regimes(const SweepResult& sr,
                                   const AnalysisThresholds& th = {});

struct MinStableParams {
    bool stable = false;
    std::int64_t raw = 0;      // param count of the first LEARNING point
    std::int64_t rounded = 0;  // one significant figure, for reporting
};

std::int64_t round_one_sig_fig(std::int64_t v);

MinStableParams min_stable_params(const SweepResult& sr, const std::vector<Regime>& labels);

// Largest grid rate whose mean accuracy stays within delta of baseline,
// as an integer percent; 0 when even the smallest rate hurts too much.
int safe_pruning_pct(const PruneProfile& pp, double delta = 0.02);

enum class PrunePhase { REDUNDANT, TRANSITION, COLLAPSED };
std::string prune_phase_str(PrunePhase p);

// Contiguous bands over the rate grid, resolved by first crossings: the
// REDUNDANT prefix holds while accuracy stays within delta of baseline, and
// the COLLAPSED suffix starts once accuracy first touches chance + 0.05.
std::vector<PrunePhase> pruning_phases(const PruneProfile& pp, double delta = 0.02,
                                       double chance = 0.1);

// The three per-cell characterizations a summary row reports.
struct RegimeReport {
    std::vector<Regime> labels;
    MinStableParams min_stable;
    int safe_pruning = -1;       // percent; -1 when the prune sweep is missing
    bool has_gap = false;
    float gap_8bit_pp = 0.0f;
};

// Summary gap for one cell: the gap at the given capacity (the minimal
// stable one). A negative capacity means the sweep never stabilized and
// falls back to the largest capacity measured.
float summary_gap(const QuantProfile& qp, std::int64_t stable_capacity);

struct SummaryRow {
    std::string dataset;
    Family family = Family::MLP;
    std::string min_params;    // rounded count or NOT_STABLE or N/A
    std::string safe_pruning;  // percent or N/A
    std::string gap_pp;        // signed decimal or N/A
};

struct SummaryTable {
    std::vector<SummaryRow> rows;
    std::vector<std::string> warnings;  // one per missing cell entry
};

struct CellReport {
    std::string dataset;
    Family family = Family::MLP;
    RegimeReport report;
};

SummaryTable summarize_table(const std::vector<CellReport>& cells);

}  // namespace nnprof
