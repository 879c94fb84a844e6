#pragma once

#include <cstdint>
#include <vector>

#include "nnprof/dataset.hpp"
#include "nnprof/models.hpp"

namespace nnprof {

// Per-rate accuracy statistics for one architecture, aggregated across seeds.
struct PruneProfile {
    ModelSpec spec;
    std::vector<double> rates;
    std::vector<float> mean_accuracy;
    std::vector<float> std_accuracy;
    float baseline_mean = 0.0f;  // unpruned accuracy across the same seeds
    float baseline_std = 0.0f;
};

// 0.1, 0.2, ..., 1.0
std::vector<double> default_prune_rates();

// Throws ValidationError unless rates are strictly increasing within (0,1].
void validate_prune_rates(const std::vector<double>& rates);

// The per-tensor rule: zero the floor(rate*size) entries of smallest
// absolute value, ties going to the lower flat index.
void l1_prune_values(std::vector<float>& w, double rate);

// One-shot magnitude pruning: the rule above applied to each weight tensor
// independently. Bias, norm, and token parameters are exempt. Returns a
// deep copy; the input model is untouched.
Model l1_prune(const Model& m, double rate);

// Test accuracy of the model pruned at each rate, one element per rate.
std::vector<float> prune_curve(const Model& m, const std::vector<double>& rates,
                               const DatasetView& test);

// Mean/std across per-seed curves; curves must all match the rate grid.
PruneProfile aggregate_prune(const ModelSpec& spec, const std::vector<double>& rates,
                             const std::vector<std::vector<float>>& curves,
                             const std::vector<float>& baselines);

}  // namespace nnprof
