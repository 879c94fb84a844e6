#include "nnprof/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "nnprof/errors.hpp"
#include "nnprof/prune.hpp"
#include "nnprof/quant.hpp"

namespace nnprof {

namespace {

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), pattern, v);
    return buf;
}

struct CellKey {
    std::string dataset;
    Family family = Family::MLP;

    bool operator<(const CellKey& o) const {
        if (dataset != o.dataset) return dataset < o.dataset;
        return static_cast<int>(family) < static_cast<int>(o.family);
    }
};

struct CellRuns {
    std::vector<RunRecord> sweep;       // FIRST_PHASE and SECOND_PHASE
    std::vector<StoredRun> prune;       // PRUNE, with curves
    std::vector<RunRecord> quant_fp32;  // QUANT split by variant
    std::vector<RunRecord> quant_qat;
};

struct DepthSweep {
    int depth = 0;
    SweepResult sweep;
    std::vector<Regime> labels;
    MinStableParams min_stable;
};

// Regime analysis per depth; non-MLP families land in one depth bucket.
std::vector<DepthSweep> analyze_sweeps(const std::vector<RunRecord>& records,
                                       const AnalysisThresholds& th) {
    std::map<int, std::vector<RunRecord>> by_depth;
    for (const auto& r : records) by_depth[r.spec.hidden_layers].push_back(r);
    std::vector<DepthSweep> out;
    for (auto& [depth, runs] : by_depth) {
        DepthSweep ds;
        ds.depth = depth;
        ds.sweep = build_sweep(runs);
        if (ds.sweep.points.size() >= 3) {
            ds.labels = detect_regimes(ds.sweep, th);
            ds.min_stable = min_stable_params(ds.sweep, ds.labels);
        }
        out.push_back(std::move(ds));
    }
    return out;
}

// The architecture whose prune curve represents the cell: largest capacity,
// deepest on ties.
struct PruneGroup {
    std::int64_t capacity = 0;
    int depth = 0;
    PruneProfile profile;
    std::vector<PrunePhase> phases;
};

}  // namespace

ReportBundle build_report(const ResultStore& store, const AnalysisThresholds& th) {
    std::map<CellKey, CellRuns> cells;
    for (const StoredRun& run : query(store)) {
        CellRuns& cell = cells[{run.record.spec.dataset, run.record.spec.family}];
        switch (run.phase) {
            case Phase::FIRST_PHASE:
            case Phase::SECOND_PHASE: cell.sweep.push_back(run.record); break;
            case Phase::PRUNE: cell.prune.push_back(run); break;
            case Phase::QUANT:
                (run.record.variant == "qat" ? cell.quant_qat : cell.quant_fp32)
                    .push_back(run.record);
                break;
        }
    }

    ReportBundle bundle;
    std::vector<CellReport> reports;
    std::ostringstream details;

    for (auto& [key, cell] : cells) {
        CellReport report;
        report.dataset = key.dataset;
        report.family = key.family;
        details << "== " << key.dataset << " / " << family_str(key.family) << " ==\n";

        // capacity sweep: regimes per depth, min stable across depths
        std::vector<DepthSweep> sweeps;
        if (!cell.sweep.empty()) sweeps = analyze_sweeps(cell.sweep, th);
        const DepthSweep* chosen = nullptr;
        for (const auto& ds : sweeps) {
            if (ds.labels.empty()) continue;
            if (!chosen) chosen = &ds;
            const bool better = ds.min_stable.stable &&
                                (!chosen->min_stable.stable ||
                                 ds.min_stable.raw < chosen->min_stable.raw);
            if (better) chosen = &ds;
        }
        for (const auto& ds : sweeps) {
            details << "capacity sweep, depth " << ds.depth << ":\n";
            details << "  capacity  params     runs  mean    std     gap     diverged";
            details << (ds.labels.empty() ? "  (too few points for regimes)\n" : "  regime\n");
            for (std::size_t i = 0; i < ds.sweep.points.size(); ++i) {
                const CapacityPoint& pt = ds.sweep.points[i];
                char line[160];
                std::snprintf(line, sizeof(line),
                              "  %-9lld %-10lld %-5d %.4f  %.4f  %+.4f  %.2f",
                              static_cast<long long>(pt.capacity),
                              static_cast<long long>(pt.param_count), pt.runs,
                              pt.mean_accuracy, pt.std_accuracy, pt.train_test_gap,
                              pt.diverged_fraction);
                details << line;
                if (!ds.labels.empty()) details << "      " << regime_str(ds.labels[i]);
                details << "\n";
            }
        }
        if (chosen) {
            report.report.labels = chosen->labels;
            report.report.min_stable = chosen->min_stable;
            if (chosen->min_stable.stable)
                details << "min stable params: " << chosen->min_stable.raw << " (reported "
                        << chosen->min_stable.rounded << ", depth " << chosen->depth << ")\n";
            else
                details << "min stable params: sweep never stabilized\n";
        } else if (!cell.sweep.empty()) {
            details << "min stable params: not computable (fewer than 3 capacity points)\n";
        }

        // prune curve for the largest trained architecture
        if (!cell.prune.empty()) {
            std::map<std::pair<std::int64_t, int>, std::vector<const StoredRun*>> groups;
            for (const auto& run : cell.prune)
                groups[{run.record.spec.capacity, run.record.spec.hidden_layers}].push_back(
                    &run);
            const auto& [coords, members] = *groups.rbegin();
            const std::vector<double>& rates = members.front()->prune_rates;
            bool consistent = true;
            std::vector<std::vector<float>> curves;
            std::vector<float> baselines;
            for (const auto* run : members) {
                if (run->prune_rates != rates) consistent = false;
                curves.push_back(run->prune_accuracy);
                baselines.push_back(run->record.test_accuracy);
            }
            if (consistent && !rates.empty()) {
                PruneGroup pg;
                pg.capacity = coords.first;
                pg.depth = coords.second;
                pg.profile = aggregate_prune(members.front()->record.spec, rates, curves,
                                             baselines);
                pg.phases = pruning_phases(pg.profile, th.prune_delta);
                report.report.safe_pruning = safe_pruning_pct(pg.profile, th.prune_delta);

                details << "prune sweep at capacity " << pg.capacity << ", depth "
                        << pg.depth << " (" << members.size() << " seeds), baseline "
                        << fmt("%.4f", pg.profile.baseline_mean) << " +- "
                        << fmt("%.4f", pg.profile.baseline_std) << ":\n";
                details << "  rate   mean    std     phase\n";
                for (std::size_t i = 0; i < rates.size(); ++i) {
                    char line[120];
                    std::snprintf(line, sizeof(line), "  %3d%%   %.4f  %.4f  %s\n",
                                  static_cast<int>(std::lround(rates[i] * 100.0)),
                                  pg.profile.mean_accuracy[i], pg.profile.std_accuracy[i],
                                  prune_phase_str(pg.phases[i]).c_str());
                    details << line;
                }
                details << "safe pruning: " << report.report.safe_pruning << "%\n";
            } else {
                details << "prune sweep: records disagree on the rate grid; skipped\n";
            }
        }

        // 8-bit gap at the reference capacity
        if (!cell.quant_fp32.empty() && !cell.quant_qat.empty()) {
            const auto fp32 = capacity_accuracy(build_sweep(cell.quant_fp32));
            const auto int8 = capacity_accuracy(build_sweep(cell.quant_qat));
            try {
                const QuantProfile qp = quant_gap(fp32, int8);
                std::int64_t at = -1;  // -1 means the largest measured capacity
                if (chosen && chosen->min_stable.stable) {
                    const auto& pts = chosen->sweep.points;
                    for (std::size_t i = 0; i < pts.size(); ++i)
                        if (chosen->labels[i] == Regime::LEARNING) {
                            for (const auto& q : qp.points)
                                if (q.capacity == pts[i].capacity) at = pts[i].capacity;
                            break;
                        }
                }
                report.report.has_gap = true;
                report.report.gap_8bit_pp = summary_gap(qp, at);
                details << "quantization (fp32 vs int8):\n";
                details << "  capacity  fp32    int8    gap_pp\n";
                for (const auto& q : qp.points) {
                    char line[120];
                    std::snprintf(line, sizeof(line), "  %-9lld %.4f  %.4f  %+.2f\n",
                                  static_cast<long long>(q.capacity), q.fp32_accuracy,
                                  q.int8_accuracy, q.gap_pp);
                    details << line;
                }
                details << "8-bit gap: " << fmt("%+.2f", report.report.gap_8bit_pp)
                        << "pp at "
                        << (at >= 0 ? "capacity " + std::to_string(at)
                                    : "the largest measured capacity")
                        << "\n";
            } catch (const ValidationError& e) {
                details << "quantization: " << e.what() << "; skipped\n";
            }
        }

        details << "\n";
        reports.push_back(std::move(report));
    }

    bundle.table = summarize_table(reports);
    bundle.details_text = details.str();

    // fixed-width text table
    std::ostringstream text;
    char line[160];
    std::snprintf(line, sizeof(line), "%-15s %-7s %-12s %-18s %s\n", "dataset", "family",
                  "min_params", "safe_pruning_pct", "gap_8bit_pp");
    text << line;
    for (const auto& row : bundle.table.rows) {
        std::snprintf(line, sizeof(line), "%-15s %-7s %-12s %-18s %s\n", row.dataset.c_str(),
                      family_str(row.family).c_str(), row.min_params.c_str(),
                      row.safe_pruning.c_str(), row.gap_pp.c_str());
        text << line;
    }
    for (const auto& w : bundle.table.warnings) text << "warning: " << w << "\n";
    bundle.summary_text = text.str();

    std::ostringstream tsv;
    tsv << "dataset\tfamily\tmin_params\tsafe_pruning_pct\tgap_8bit_pp\n";
    for (const auto& row : bundle.table.rows)
        tsv << row.dataset << "\t" << family_str(row.family) << "\t" << row.min_params
            << "\t" << row.safe_pruning << "\t" << row.gap_pp << "\n";
    bundle.summary_tsv = tsv.str();

    return bundle;
}

void write_report(const ReportBundle& bundle, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto write = [&](const std::string& name, const std::string& body) {
        const fs::path path = fs::path(out_dir) / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigurationError("cannot write " + path.string());
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
    };
    write("summary.txt", bundle.summary_text);
    write("summary.tsv", bundle.summary_tsv);
    write("cells.txt", bundle.details_text);
}

}  // namespace nnprof
