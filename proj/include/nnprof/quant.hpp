#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "nnprof/dataset.hpp"
#include "nnprof/models.hpp"
#include "nnprof/trainer.hpp"

namespace nnprof {

// Simulated W8A8 scheme: signed symmetric per-tensor weights, unsigned
// affine per-tensor activations, moving-average min-max observers.
struct QuantSpec {
    std::int64_t weight_qmin = -127;
    std::int64_t weight_qmax = 127;
    std::int64_t act_qmin = 0;
    std::int64_t act_qmax = 255;
    double momentum = 0.01;

    void validate() const;
};

struct MovingMinMax {
    bool initialized = false;
    double min = 0.0;
    double max = 0.0;

    // First call adopts the batch extrema; later calls move each bound
    // toward the batch value by the averaging constant.
    void update(double batch_min, double batch_max, double momentum);
};

struct QuantParams {
    float scale = 1.0f;
    std::int64_t zero_point = 0;
};

// max-abs of the running range mapped onto [weight_qmin, weight_qmax],
// zero_point pinned at 0. Degenerate all-zero range falls back to scale 1.
QuantParams weight_params(const MovingMinMax& state, const QuantSpec& qs);

// Running range widened to include zero, mapped affinely onto
// [act_qmin, act_qmax]; zero_point rounded then clamped into that range.
QuantParams activation_params(const MovingMinMax& state, const QuantSpec& qs);

// Fake-quantizes every weight use and activation site the models expose.
// While training, observers absorb each tensor's extrema before quantizing;
// frozen afterwards, evaluation reuses the stored ranges. Sites never seen
// in training pass through untouched.
class ObserverQuantContext : public QuantContext {
public:
    explicit ObserverQuantContext(QuantSpec qs = {});

    void set_training(bool training) { training_ = training; }
    bool training() const { return training_; }

    // Observer ranges are part of a checkpoint: saving and restoring them
    // alongside the weights keeps the quantized model self-consistent.
    void save_checkpoint();
    void restore_checkpoint();

    Tensor weight(int param_index, const Tensor& w) override;
    Tensor activation(int site, const Tensor& x) override;

    const std::map<int, MovingMinMax>& weight_observers() const { return weight_obs_; }
    const std::map<int, MovingMinMax>& activation_observers() const { return act_obs_; }

private:
    QuantSpec qs_;
    bool training_ = true;
    std::map<int, MovingMinMax> weight_obs_;
    std::map<int, MovingMinMax> act_obs_;
    std::map<int, MovingMinMax> saved_weight_obs_;
    std::map<int, MovingMinMax> saved_act_obs_;
};

// train_one with quantized forward passes; the returned record is tagged
// variant "qat" and its accuracies are measured under frozen ranges.
RunRecord qat_train(const ModelSpec& spec, const TrainConfig& cfg, std::uint64_t seed,
                    const Dataset& train, const Dataset& test, const QuantSpec& qs = {});

// Full-precision vs quantized accuracy at one capacity point.
struct QuantPoint {
    std::int64_t capacity = 0;
    float fp32_accuracy = 0.0f;
    float int8_accuracy = 0.0f;
    float gap_pp = 0.0f;  // (fp32 - int8) * 100
};

struct QuantProfile {
    std::vector<QuantPoint> points;
};

// Pairs two capacity-keyed accuracy grids; the grids must match exactly.
QuantProfile quant_gap(const std::vector<std::pair<std::int64_t, float>>& fp32,
                       const std::vector<std::pair<std::int64_t, float>>& int8);

}  // namespace nnprof
