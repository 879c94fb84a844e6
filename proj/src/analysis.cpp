#include "nnprof/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "nnprof/errors.hpp"

namespace nnprof {

std::string regime_str(Regime r) {
    switch (r) {
        case Regime::UNSTABLE: return "UNSTABLE";
        case Regime::LEARNING: return "LEARNING";
        case Regime::OVERFITTING: return "OVERFITTING";
    }
    return "?";
}

std::string prune_phase_str(PrunePhase p) {
    switch (p) {
        case PrunePhase::REDUNDANT: return "REDUNDANT";
        case PrunePhase::TRANSITION: return "TRANSITION";
        case PrunePhase::COLLAPSED: return "COLLAPSED";
    }
    return "?";
}

SweepResult build_sweep(const std::vector<RunRecord>& records) {
    if (records.empty()) throw ValidationError("sweep aggregation needs at least one record");
    SweepResult sr;
    sr.family = records.front().spec.family;
    sr.dataset = records.front().spec.dataset;

    std::map<std::int64_t, std::vector<const RunRecord*>> groups;
    for (const auto& r : records) {
        if (r.spec.family != sr.family || r.spec.dataset != sr.dataset)
            throw ValidationError("sweep records must share one family and dataset");
        groups[r.spec.capacity].push_back(&r);
    }

    for (const auto& [capacity, runs] : groups) {
        CapacityPoint pt;
        pt.capacity = capacity;
        pt.param_count = runs.front()->param_count;
        pt.runs = static_cast<int>(runs.size());
        double acc_sum = 0.0, gap_sum = 0.0;
        int diverged = 0;
        for (const auto* r : runs) {
            acc_sum += r->test_accuracy;
            gap_sum += static_cast<double>(r->train_accuracy) - r->test_accuracy;
            if (r->diverged) ++diverged;
        }
        const double n = static_cast<double>(runs.size());
        const double mean = acc_sum / n;
        double sq = 0.0;
        for (const auto* r : runs) sq += (r->test_accuracy - mean) * (r->test_accuracy - mean);
        pt.mean_accuracy = static_cast<float>(mean);
        pt.std_accuracy = static_cast<float>(std::sqrt(sq / n));
        pt.diverged_fraction = static_cast<float>(diverged / n);
        pt.train_test_gap = static_cast<float>(gap_sum / n);
        sr.points.push_back(pt);
    }
    return sr;  // std::map iteration already sorted by capacity
}

std::vector<std::pair<std::int64_t, float>> capacity_accuracy(const SweepResult& sr) {
    std::vector<std::pair<std::int64_t, float>> out;
    out.reserve(sr.points.size());
    for (const auto& p : sr.points) out.emplace_back(p.capacity, p.mean_accuracy);
    return out;
}

std::vector<Regime> detect_regimes(const SweepResult& sr, const AnalysisThresholds& th) {
    const auto& pts = sr.points;
    if (pts.size() < 3)
        throw ValidationError("regime detection needs at least 3 capacity points, got " +
                              std::to_string(pts.size()));

    float plateau = pts[0].mean_accuracy;
    for (const auto& p : pts) plateau = std::max(plateau, p.mean_accuracy);
    const double near_plateau = static_cast<double>(plateau) - 0.02;

    auto eligible = [&](std::size_t i) {
        return pts[i].std_accuracy <= th.std_tau &&
               pts[i].mean_accuracy >= near_plateau;
    };

    std::size_t start = pts.size();
    for (std::size_t i = 0; i < pts.size(); ++i)
        if (eligible(i)) {
            start = i;
            break;
        }

    std::vector<Regime> labels(pts.size(), Regime::UNSTABLE);
    if (start == pts.size()) return labels;  // nothing ever stabilized

    float best = -1.0f;
    float gap_at_best = 0.0f;
    bool overfit = false;
    for (std::size_t i = start; i < pts.size(); ++i) {
        if (!overfit) {
            if (pts[i].mean_accuracy > best) {
                best = pts[i].mean_accuracy;
                gap_at_best = pts[i].train_test_gap;
            } else if (pts[i].mean_accuracy < best - th.overfit_tau &&
                       pts[i].train_test_gap > gap_at_best + th.gain_tau) {
                overfit = true;  // sticky: bands stay contiguous
            }
        }
        labels[i] = overfit ? Regime::OVERFITTING : Regime::LEARNING;
    }
    return labels;
}

std::int64_t round_one_sig_fig(std::int64_t v) {
    if (v <= 0) return v;
    std::int64_t mag = 1;
    while (v >= mag * 10) mag *= 10;
    return static_cast<std::int64_t>(
               std::llround(static_cast<double>(v) / static_cast<double>(mag))) *
           mag;
}

MinStableParams min_stable_params(const SweepResult& sr, const std::vector<Regime>& labels) {
    if (labels.size() != sr.points.size())
        throw ValidationError("regime labels do not match the sweep points");
    MinStableParams out;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == Regime::LEARNING) {
            out.stable = true;
            out.raw = sr.points[i].param_count;
            out.rounded = round_one_sig_fig(out.raw);
            return out;
        }
    return out;  // NOT_STABLE sentinel: stable stays false
}

int safe_pruning_pct(const PruneProfile& pp, double delta) {
    const double floor_acc = static_cast<double>(pp.baseline_mean) - delta;
    int best = 0;
    for (std::size_t i = 0; i < pp.rates.size(); ++i)
        if (pp.mean_accuracy[i] >= floor_acc)
            best = std::max(best, static_cast<int>(std::llround(pp.rates[i] * 100.0)));
    return best;
}

std::vector<PrunePhase> pruning_phases(const PruneProfile& pp, double delta, double chance) {
    const double near_baseline = static_cast<double>(pp.baseline_mean) - delta;
    const double collapse = chance + 0.05;
    std::vector<PrunePhase> phases;
    phases.reserve(pp.rates.size());
    bool in_prefix = true;
    bool collapsed = false;
    for (float acc : pp.mean_accuracy) {
        if (in_prefix && acc >= near_baseline) {
            phases.push_back(PrunePhase::REDUNDANT);
            continue;
        }
        in_prefix = false;
        if (!collapsed && acc <= collapse) collapsed = true;
        phases.push_back(collapsed ? PrunePhase::COLLAPSED : PrunePhase::TRANSITION);
    }
    return phases;
}

float summary_gap(const QuantProfile& qp, std::int64_t stable_capacity) {
    if (qp.points.empty()) throw ValidationError("summary gap needs at least one capacity");
    if (stable_capacity < 0) return qp.points.back().gap_pp;
    for (const auto& pt : qp.points)
        if (pt.capacity == stable_capacity) return pt.gap_pp;
    throw ValidationError("capacity " + std::to_string(stable_capacity) +
                          " missing from the quantization grid");
}

namespace {

std::string format_gap(float gap_pp) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", static_cast<double>(gap_pp));
    return buf;
}

}  // namespace

SummaryTable summarize_table(const std::vector<CellReport>& cells) {
    SummaryTable table;
    for (const auto& cell : cells) {
        SummaryRow row;
        row.dataset = cell.dataset;
        row.family = cell.family;
        const std::string tag = cell.dataset + "/" + family_str(cell.family);

        if (cell.report.labels.empty()) {
            row.min_params = "N/A";
            table.warnings.push_back(tag + ": capacity sweep missing");
        } else if (!cell.report.min_stable.stable) {
            row.min_params = "NOT_STABLE";
        } else {
            row.min_params = std::to_string(cell.report.min_stable.rounded);
        }

        if (cell.report.safe_pruning < 0) {
            row.safe_pruning = "N/A";
            table.warnings.push_back(tag + ": prune sweep missing");
        } else {
            row.safe_pruning = std::to_string(cell.report.safe_pruning);
        }

        if (!cell.report.has_gap) {
            row.gap_pp = "N/A";
            table.warnings.push_back(tag + ": quantization sweep missing");
        } else {
            row.gap_pp = format_gap(cell.report.gap_8bit_pp);
        }
        table.rows.push_back(row);
    }
    return table;
}

}  // namespace nnprof
