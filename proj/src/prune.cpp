#include "nnprof/prune.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "nnprof/errors.hpp"
#include "nnprof/trainer.hpp"

namespace nnprof {

std::vector<double> default_prune_rates() {
    std::vector<double> rates;
    for (int i = 1; i <= 10; ++i) rates.push_back(i / 10.0);
    return rates;
}

void validate_prune_rates(const std::vector<double>& rates) {
    double prev = 0.0;
    for (double r : rates) {
        if (r <= prev || r > 1.0)
            throw ValidationError("prune rates must be strictly increasing within (0,1]");
        prev = r;
    }
}

void l1_prune_values(std::vector<float>& w, double rate) {
    if (rate < 0.0 || rate > 1.0)
        throw ValidationError("prune rate must lie in [0,1], got " + std::to_string(rate));
    const auto n = static_cast<std::int64_t>(w.size());
    // nudge past float error so e.g. 0.3*10 lands on 3, not 2
    const auto k =
        static_cast<std::int64_t>(std::floor(rate * static_cast<double>(n) + 1e-9));
    if (k <= 0) return;
    std::vector<std::int64_t> order(w.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&w](std::int64_t a, std::int64_t b) {
        const float ma = std::fabs(w[static_cast<std::size_t>(a)]);
        const float mb = std::fabs(w[static_cast<std::size_t>(b)]);
        if (ma != mb) return ma < mb;
        return a < b;
    });
    for (std::int64_t i = 0; i < k; ++i) w[static_cast<std::size_t>(order[i])] = 0.0f;
}

Model l1_prune(const Model& m, double rate) {
    if (rate < 0.0 || rate > 1.0)
        throw ValidationError("prune rate must lie in [0,1], got " + std::to_string(rate));
    Model out = clone_model(m);
    for (auto& p : out.params) {
        if (p.kind != ParamKind::Weight) continue;
        l1_prune_values(p.tensor.values(), rate);
    }
    return out;
}

std::vector<float> prune_curve(const Model& m, const std::vector<double>& rates,
                               const DatasetView& test) {
    validate_prune_rates(rates);
    std::vector<float> accs;
    accs.reserve(rates.size());
    for (double r : rates) accs.push_back(evaluate(l1_prune(m, r), test));
    return accs;
}

namespace {

std::pair<float, float> mean_std(const std::vector<float>& xs) {
    if (xs.empty()) return {0.0f, 0.0f};
    double sum = 0.0;
    for (float x : xs) sum += x;
    const double mean = sum / static_cast<double>(xs.size());
    double sq = 0.0;
    for (float x : xs) sq += (x - mean) * (x - mean);
    return {static_cast<float>(mean),
            static_cast<float>(std::sqrt(sq / static_cast<double>(xs.size())))};
}

}  // namespace

PruneProfile aggregate_prune(const ModelSpec& spec, const std::vector<double>& rates,
                             const std::vector<std::vector<float>>& curves,
                             const std::vector<float>& baselines) {
    validate_prune_rates(rates);
    if (curves.empty()) throw ValidationError("prune aggregation needs at least one curve");
    if (curves.size() != baselines.size())
        throw ValidationError("prune aggregation: one baseline per curve required");
    for (const auto& c : curves)
        if (c.size() != rates.size())
            throw ValidationError("prune curve length does not match the rate grid");

    PruneProfile prof;
    prof.spec = spec;
    prof.rates = rates;
    for (std::size_t i = 0; i < rates.size(); ++i) {
        std::vector<float> col;
        col.reserve(curves.size());
        for (const auto& c : curves) col.push_back(c[i]);
        auto [m, s] = mean_std(col);
        prof.mean_accuracy.push_back(m);
        prof.std_accuracy.push_back(s);
    }
    auto [bm, bs] = mean_std(baselines);
    prof.baseline_mean = bm;
    prof.baseline_std = bs;
    return prof;
}

}  // namespace nnprof
