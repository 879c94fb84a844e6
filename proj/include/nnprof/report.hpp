#pragma once

#include <string>

#include "nnprof/analysis.hpp"
#include "nnprof/orchestrator.hpp"
#include "nnprof/store.hpp"

namespace nnprof {

// Everything the analyze and report commands derive from one store.
struct ReportBundle {
    SummaryTable table;
    std::string summary_text;  // fixed-width table plus warnings
    std::string summary_tsv;   // the same rows, tab-separated
    std::string details_text;  // per-cell capacity, prune, and quant breakdown
};

// Builds the per-(dataset, family) summary from every OK record in the
// store. MLP sweeps are analyzed per depth and the cell reports the
// smallest stable parameter count across depths; the prune column comes
// from the largest architecture pruned; the 8-bit gap is read at the
// minimal stable capacity when that point exists in the quant sweep and at
// the largest measured capacity otherwise.
ReportBundle build_report(const ResultStore& store, const AnalysisThresholds& th = {});

// Writes summary.txt, summary.tsv, and cells.txt under out_dir.
void write_report(const ReportBundle& bundle, const std::string& out_dir);

}  // namespace nnprof
