#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nnprof/dataset.hpp"
#include "nnprof/models.hpp"

namespace nnprof {

struct TrainConfig {
    std::int64_t batch_size = 100;
    float learning_rate = 1e-3f;
    int epochs = 20;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float epsilon = 1e-8f;
    int repetitions = 0;  // 0 -> family default (30 MLP, 10 CNN/ViT)
    double validation_fraction = 0.10;

    void validate() const;
    int effective_repetitions(Family f) const;
};

struct RunRecord {
    ModelSpec spec;
    std::uint64_t seed = 0;
    std::string variant = "fp32";  // fp32 | qat
    std::vector<float> train_loss;    // per completed epoch, mean batch loss
    std::vector<float> val_accuracy;  // per completed epoch
    int best_epoch = 0;  // 1-based; 0 when no epoch completed
    float test_accuracy = 0.0f;
    float train_accuracy = 0.0f;  // train-view accuracy at the kept checkpoint
    std::int64_t param_count = 0;
    bool diverged = false;
    int diverged_epoch = 0;  // 1-based epoch where loss went non-finite
    double wall_time = 0.0;
};

struct AdamState {
    std::vector<std::vector<float>> m, v;

    static AdamState zeros_like(const std::vector<Param>& params);
};

// One optimizer step over every parameter; gradients are read from the
// parameter tensors. t is the 1-based step index for bias correction.
void adam_step(std::vector<Param>& params, AdamState& state, std::int64_t t,
               const TrainConfig& cfg);

// 1-based index of the maximum, earliest on ties; 0 for an empty trace.
int best_epoch_of(const std::vector<float>& val_accuracy);

// Hooks that let quantization-aware training reuse the training loop.
// save_best fires whenever the trainer keeps a new best checkpoint and
// restore_best right before the final evaluations, so stateful contexts
// (observer ranges) stay consistent with the restored weights.
struct TrainHooks {
    QuantContext* qc = nullptr;
    std::function<void(bool training)> set_mode;  // observers update vs frozen
    std::function<void()> save_best;
    std::function<void()> restore_best;
    // Receives the finished model (best checkpoint restored) after the final
    // evaluations, for callers that keep working with the weights, e.g. a
    // pruning sweep.
    std::function<void(Model&)> final_model;
};

float evaluate(const Model& model, const DatasetView& view, QuantContext* qc = nullptr);

// Full seeded run: build, split, train with best-checkpoint retention,
// evaluate test accuracy at the kept checkpoint. Non-finite loss marks the
// record diverged and stops training; the record stays valid.
RunRecord train_one(const ModelSpec& spec, const TrainConfig& cfg, std::uint64_t seed,
                    const Dataset& train, const Dataset& test, const TrainHooks& hooks = {});

}  // namespace nnprof
