#pragma once

#include <string>
#include <vector>

#include "nnprof/store.hpp"

namespace nnprof {

// One mean line with its +-std band.
struct PlotSeries {
    std::string label;
    std::vector<double> x;
    std::vector<double> mean;
    std::vector<double> std_dev;
};

struct PlotSpec {
    std::string title;
    std::string x_label;
    std::string y_label;
    bool log_x = false;
    std::vector<PlotSeries> series;
};

// Self-contained SVG: one line plus shaded band per series, fixed accuracy
// axis [0, 1], legend, no external assets. Identical specs render identical
// bytes.
std::string render_svg(const PlotSpec& spec);

// The numbers behind the figure, one row per point: series,x,mean,std.
std::string render_csv(const PlotSpec& spec);

// Capacity sweeps on a log axis, one series per (dataset, family, depth).
PlotSpec convergence_plot(const ResultStore& store);

// Accuracy against pruning rate in percent, one series per pruned
// architecture.
PlotSpec pruning_plot(const ResultStore& store);

// fp32 and int8 accuracy overlaid per (dataset, family), capacity log axis.
PlotSpec quantization_plot(const ResultStore& store);

// Dispatch by kind name ("convergence", "pruning", "quantization").
// Unknown kind throws ValidationError; a store with no matching records
// throws ConfigurationError.
PlotSpec plot_of_kind(const ResultStore& store, const std::string& kind);

}  // namespace nnprof
