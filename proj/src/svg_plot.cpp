#include "nnprof/svg_plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>
#include <tuple>

#include "nnprof/analysis.hpp"
#include "nnprof/errors.hpp"
#include "nnprof/orchestrator.hpp"
#include "nnprof/prune.hpp"

namespace nnprof {

namespace {

// canvas geometry; the right margin holds the legend
constexpr double kWidth = 800.0;
constexpr double kHeight = 420.0;
constexpr double kLeft = 70.0;
constexpr double kRight = 560.0;
constexpr double kTop = 40.0;
constexpr double kBottom = 370.0;
constexpr double kYMax = 1.02;  // accuracy axis headroom

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                          "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr int kPaletteSize = 10;

std::string num(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

std::string tick_label(double v) {
    char buf[48];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

std::string xml_escape(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

struct XAxis {
    bool log = false;
    double lo = 0.0;  // data domain, padded for mapping
    double hi = 1.0;
    std::vector<double> ticks;

    double map(double x) const {
        double t;
        if (log) {
            const double l0 = std::log10(lo), l1 = std::log10(hi);
            t = (std::log10(std::max(x, 1e-12)) - l0) / (l1 - l0);
        } else {
            t = (x - lo) / (hi - lo);
        }
        return kLeft + t * (kRight - kLeft);
    }
};

double map_y(double v) {
    const double t = std::clamp(v, 0.0, kYMax) / kYMax;
    return kBottom - t * (kBottom - kTop);
}

std::vector<double> linear_ticks(double lo, double hi) {
    const double raw = (hi - lo) / 10.0;
    const double mag = std::pow(10.0, std::floor(std::log10(raw)));
    const double norm = raw / mag;
    const double step = (norm <= 1.0 ? 1.0 : norm <= 2.0 ? 2.0 : norm <= 5.0 ? 5.0 : 10.0) * mag;
    std::vector<double> ticks;
    for (double v = std::ceil(lo / step) * step; v <= hi + step * 1e-9; v += step)
        ticks.push_back(v);
    return ticks;
}

XAxis build_x_axis(const PlotSpec& spec) {
    double lo = 0.0, hi = 0.0;
    bool first = true;
    for (const auto& s : spec.series)
        for (double x : s.x) {
            lo = first ? x : std::min(lo, x);
            hi = first ? x : std::max(hi, x);
            first = false;
        }
    XAxis ax;
    ax.log = spec.log_x;
    if (ax.log) {
        lo = std::max(lo, 1e-9);
        hi = std::max(hi, lo);
        if (lo == hi) {
            lo /= 2.0;
            hi *= 2.0;
        }
        for (int d = static_cast<int>(std::ceil(std::log10(lo) - 1e-9));
             d <= static_cast<int>(std::floor(std::log10(hi) + 1e-9)); ++d)
            ax.ticks.push_back(std::pow(10.0, d));
        if (ax.ticks.size() < 2) ax.ticks = {lo, hi};
        const double pad = std::pow(hi / lo, 0.03);
        ax.lo = lo / pad;
        ax.hi = hi * pad;
    } else {
        if (lo == hi) {
            const double pad = std::max(1.0, std::fabs(lo) * 0.1);
            lo -= pad;
            hi += pad;
        }
        ax.ticks = linear_ticks(lo, hi);
        const double pad = (hi - lo) * 0.02;
        ax.lo = lo - pad;
        ax.hi = hi + pad;
    }
    return ax;
}

void append_text(std::ostringstream& svg, double x, double y, const std::string& body,
                 const char* anchor, int size, const char* extra = "") {
    svg << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" text-anchor=\"" << anchor
        << "\" font-family=\"Helvetica,Arial,sans-serif\" font-size=\"" << size
        << "\" fill=\"#333333\"" << extra << ">" << xml_escape(body) << "</text>\n";
}

}  // namespace

std::string render_svg(const PlotSpec& spec) {
    if (spec.series.empty()) throw ValidationError("plot needs at least one series");
    for (const auto& s : spec.series)
        if (s.x.empty() || s.x.size() != s.mean.size() || s.x.size() != s.std_dev.size())
            throw ValidationError("plot series '" + s.label +
                                  "' needs matching non-empty x, mean, and std arrays");

    const XAxis ax = build_x_axis(spec);
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << tick_label(kWidth)
        << "\" height=\"" << tick_label(kHeight) << "\" viewBox=\"0 0 "
        << tick_label(kWidth) << " " << tick_label(kHeight) << "\">\n";
    svg << "<rect width=\"" << tick_label(kWidth) << "\" height=\"" << tick_label(kHeight)
        << "\" fill=\"#ffffff\"/>\n";

    append_text(svg, (kLeft + kRight) / 2.0, 24.0, spec.title, "middle", 14,
                " font-weight=\"bold\"");

    // horizontal grid and accuracy ticks
    for (int i = 0; i <= 5; ++i) {
        const double v = i * 0.2;
        const double y = map_y(v);
        svg << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(y) << "\" x2=\""
            << num(kRight) << "\" y2=\"" << num(y)
            << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        append_text(svg, kLeft - 8.0, y + 4.0, tick_label(v), "end", 11);
    }
    // vertical grid and x ticks
    for (double v : ax.ticks) {
        const double x = ax.map(v);
        svg << "<line x1=\"" << num(x) << "\" y1=\"" << num(kTop) << "\" x2=\"" << num(x)
            << "\" y2=\"" << num(kBottom)
            << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        append_text(svg, x, kBottom + 16.0, tick_label(v), "middle", 11);
    }
    // axis frame
    svg << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kBottom) << "\" x2=\""
        << num(kRight) << "\" y2=\"" << num(kBottom)
        << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";
    svg << "<line x1=\"" << num(kLeft) << "\" y1=\"" << num(kTop) << "\" x2=\""
        << num(kLeft) << "\" y2=\"" << num(kBottom)
        << "\" stroke=\"#333333\" stroke-width=\"1\"/>\n";

    append_text(svg, (kLeft + kRight) / 2.0, kHeight - 14.0, spec.x_label, "middle", 12);
    append_text(svg, 18.0, (kTop + kBottom) / 2.0, spec.y_label, "middle", 12,
                " transform=\"rotate(-90 18.00 205.00)\"");

    for (std::size_t si = 0; si < spec.series.size(); ++si) {
        const PlotSeries& s = spec.series[si];
        const char* color = kPalette[si % kPaletteSize];

        // band: upper edge left to right, lower edge back
        svg << "<polygon fill=\"" << color << "\" fill-opacity=\"0.18\" stroke=\"none\" "
            << "points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            svg << num(ax.map(s.x[i])) << "," << num(map_y(s.mean[i] + s.std_dev[i])) << " ";
        for (std::size_t i = s.x.size(); i-- > 0;)
            svg << num(ax.map(s.x[i])) << "," << num(map_y(s.mean[i] - s.std_dev[i]))
                << (i == 0 ? "" : " ");
        svg << "\"/>\n";

        svg << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.8\" points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i)
            svg << num(ax.map(s.x[i])) << "," << num(map_y(s.mean[i]))
                << (i + 1 == s.x.size() ? "" : " ");
        svg << "\"/>\n";

        for (std::size_t i = 0; i < s.x.size(); ++i)
            svg << "<circle cx=\"" << num(ax.map(s.x[i])) << "\" cy=\""
                << num(map_y(s.mean[i])) << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }

    // legend column to the right of the plot
    for (std::size_t si = 0; si < spec.series.size(); ++si) {
        const double y = kTop + 8.0 + 16.0 * static_cast<double>(si);
        svg << "<rect x=\"" << num(kRight + 12.0) << "\" y=\"" << num(y - 9.0)
            << "\" width=\"12\" height=\"12\" fill=\"" << kPalette[si % kPaletteSize]
            << "\"/>\n";
        append_text(svg, kRight + 30.0, y + 1.0, spec.series[si].label, "start", 11);
    }

    svg << "</svg>\n";
    return svg.str();
}

std::string render_csv(const PlotSpec& spec) {
    std::ostringstream csv;
    csv << "series,x,mean,std\n";
    char buf[160];
    for (const auto& s : spec.series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            std::snprintf(buf, sizeof(buf), "%s,%.9g,%.9g,%.9g\n", s.label.c_str(),
                          s.x[i], s.mean[i], s.std_dev[i]);
            csv << buf;
        }
    return csv.str();
}

namespace {

PlotSeries sweep_series(const std::vector<RunRecord>& records, std::string label) {
    const SweepResult sr = build_sweep(records);
    PlotSeries s;
    s.label = std::move(label);
    for (const auto& pt : sr.points) {
        s.x.push_back(static_cast<double>(pt.capacity));
        s.mean.push_back(pt.mean_accuracy);
        s.std_dev.push_back(pt.std_accuracy);
    }
    return s;
}

std::string cell_label(const ModelSpec& spec) {
    std::string label = spec.dataset + " " + family_str(spec.family);
    if (spec.family == Family::MLP)
        label += " L" + std::to_string(spec.hidden_layers);
    return label;
}

}  // namespace

PlotSpec convergence_plot(const ResultStore& store) {
    std::map<std::tuple<std::string, int, int>, std::vector<RunRecord>> groups;
    for (const StoredRun& run : query(store))
        if (run.phase == Phase::FIRST_PHASE || run.phase == Phase::SECOND_PHASE)
            groups[{run.record.spec.dataset, static_cast<int>(run.record.spec.family),
                    run.record.spec.hidden_layers}]
                .push_back(run.record);
    if (groups.empty())
        throw ConfigurationError("store has no capacity sweep records to plot");

    PlotSpec spec;
    spec.title = "Test accuracy vs capacity";
    spec.x_label = "capacity";
    spec.y_label = "test accuracy";
    spec.log_x = true;
    for (auto& [key, records] : groups)
        spec.series.push_back(sweep_series(records, cell_label(records.front().spec)));
    return spec;
}

PlotSpec pruning_plot(const ResultStore& store) {
    std::map<std::tuple<std::string, int, std::int64_t, int>, std::vector<const StoredRun*>>
        groups;
    const std::vector<StoredRun> runs = query(store, {.phase = Phase::PRUNE});
    for (const StoredRun& run : runs)
        groups[{run.record.spec.dataset, static_cast<int>(run.record.spec.family),
                run.record.spec.capacity, run.record.spec.hidden_layers}]
            .push_back(&run);
    if (groups.empty()) throw ConfigurationError("store has no pruning records to plot");

    PlotSpec spec;
    spec.title = "Test accuracy vs pruning rate";
    spec.x_label = "pruned weights (%)";
    spec.y_label = "test accuracy";
    for (auto& [key, members] : groups) {
        const std::vector<double>& rates = members.front()->prune_rates;
        if (rates.empty()) continue;
        std::vector<std::vector<float>> curves;
        std::vector<float> baselines;
        for (const StoredRun* run : members) {
            if (run->prune_rates != rates) continue;
            curves.push_back(run->prune_accuracy);
            baselines.push_back(run->record.test_accuracy);
        }
        const PruneProfile pp = aggregate_prune(members.front()->record.spec, rates,
                                                curves, baselines);
        PlotSeries s;
        s.label = cell_label(members.front()->record.spec) + " cap " +
                  std::to_string(members.front()->record.spec.capacity);
        for (std::size_t i = 0; i < rates.size(); ++i) {
            s.x.push_back(rates[i] * 100.0);
            s.mean.push_back(pp.mean_accuracy[i]);
            s.std_dev.push_back(pp.std_accuracy[i]);
        }
        spec.series.push_back(std::move(s));
    }
    if (spec.series.empty())
        throw ConfigurationError("store has no pruning records to plot");
    return spec;
}

PlotSpec quantization_plot(const ResultStore& store) {
    std::map<std::pair<std::string, int>,
             std::pair<std::vector<RunRecord>, std::vector<RunRecord>>>
        groups;
    const std::vector<StoredRun> runs = query(store, {.phase = Phase::QUANT});
    for (const StoredRun& run : runs) {
        auto& cell = groups[{run.record.spec.dataset,
                             static_cast<int>(run.record.spec.family)}];
        (run.record.variant == "qat" ? cell.second : cell.first).push_back(run.record);
    }
    if (groups.empty())
        throw ConfigurationError("store has no quantization records to plot");

    PlotSpec spec;
    spec.title = "Full precision vs 8-bit accuracy";
    spec.x_label = "capacity";
    spec.y_label = "test accuracy";
    spec.log_x = true;
    for (auto& [key, cell] : groups) {
        const std::string base =
            key.first + " " + family_str(static_cast<Family>(key.second));
        if (!cell.first.empty())
            spec.series.push_back(sweep_series(cell.first, base + " fp32"));
        if (!cell.second.empty())
            spec.series.push_back(sweep_series(cell.second, base + " int8"));
    }
    return spec;
}

PlotSpec plot_of_kind(const ResultStore& store, const std::string& kind) {
    if (kind == "convergence") return convergence_plot(store);
    if (kind == "pruning") return pruning_plot(store);
    if (kind == "quantization") return quantization_plot(store);
    throw ValidationError("unknown plot kind '" + kind +
                          "'; expected convergence, pruning, or quantization");
}

}  // namespace nnprof
