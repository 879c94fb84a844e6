#include "nnprof/quant.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "nnprof/errors.hpp"
#include "nnprof/ops.hpp"

namespace nnprof {

void QuantSpec::validate() const {
    if (weight_qmin >= weight_qmax || act_qmin >= act_qmax)
        throw ValidationError("quant ranges must satisfy qmin < qmax");
    if (momentum <= 0.0 || momentum > 1.0)
        throw ValidationError("observer averaging constant must lie in (0,1]");
}

void MovingMinMax::update(double batch_min, double batch_max, double momentum) {
    if (!initialized) {
        min = batch_min;
        max = batch_max;
        initialized = true;
        return;
    }
    min += momentum * (batch_min - min);
    max += momentum * (batch_max - max);
}

QuantParams weight_params(const MovingMinMax& state, const QuantSpec& qs) {
    const double max_abs = std::max(std::fabs(state.min), std::fabs(state.max));
    QuantParams p;
    p.zero_point = 0;
    p.scale = max_abs > 0.0
                  ? static_cast<float>(max_abs / static_cast<double>(qs.weight_qmax))
                  : 1.0f;
    return p;
}

QuantParams activation_params(const MovingMinMax& state, const QuantSpec& qs) {
    // widen so real zero is always representable
    const double lo = std::min(state.min, 0.0);
    const double hi = std::max(state.max, 0.0);
    QuantParams p;
    if (hi <= lo) return p;  // degenerate all-zero range: identity-ish fallback
    const double levels = static_cast<double>(qs.act_qmax - qs.act_qmin);
    p.scale = static_cast<float>((hi - lo) / levels);
    const double zp = static_cast<double>(qs.act_qmin) - lo / p.scale;
    p.zero_point = static_cast<std::int64_t>(std::llround(zp));
    p.zero_point = std::clamp(p.zero_point, qs.act_qmin, qs.act_qmax);
    return p;
}

ObserverQuantContext::ObserverQuantContext(QuantSpec qs) : qs_(qs) { qs_.validate(); }

void ObserverQuantContext::save_checkpoint() {
    saved_weight_obs_ = weight_obs_;
    saved_act_obs_ = act_obs_;
}

void ObserverQuantContext::restore_checkpoint() {
    weight_obs_ = saved_weight_obs_;
    act_obs_ = saved_act_obs_;
}

namespace {

std::pair<double, double> extrema(const std::vector<float>& xs) {
    double lo = xs[0], hi = xs[0];
    for (float x : xs) {
        lo = std::min(lo, static_cast<double>(x));
        hi = std::max(hi, static_cast<double>(x));
    }
    return {lo, hi};
}

}  // namespace

Tensor ObserverQuantContext::weight(int param_index, const Tensor& w) {
    auto& ob = weight_obs_[param_index];
    if (training_ && w.size() > 0) {
        auto [lo, hi] = extrema(w.values());
        ob.update(lo, hi, qs_.momentum);
    }
    if (!ob.initialized) return w;
    const QuantParams p = weight_params(ob, qs_);
    return fake_quantize(w, p.scale, p.zero_point, qs_.weight_qmin, qs_.weight_qmax);
}

Tensor ObserverQuantContext::activation(int site, const Tensor& x) {
    auto& ob = act_obs_[site];
    if (training_ && x.size() > 0) {
        auto [lo, hi] = extrema(x.values());
        ob.update(lo, hi, qs_.momentum);
    }
    if (!ob.initialized) return x;
    const QuantParams p = activation_params(ob, qs_);
    return fake_quantize(x, p.scale, p.zero_point, qs_.act_qmin, qs_.act_qmax);
}

RunRecord qat_train(const ModelSpec& spec, const TrainConfig& cfg, std::uint64_t seed,
                    const Dataset& train, const Dataset& test, const QuantSpec& qs) {
    ObserverQuantContext qc(qs);
    TrainHooks hooks;
    hooks.qc = &qc;
    hooks.set_mode = [&qc](bool training) { qc.set_training(training); };
    hooks.save_best = [&qc] { qc.save_checkpoint(); };
    hooks.restore_best = [&qc] { qc.restore_checkpoint(); };
    RunRecord rec = train_one(spec, cfg, seed, train, test, hooks);
    rec.variant = "qat";
    return rec;
}

QuantProfile quant_gap(const std::vector<std::pair<std::int64_t, float>>& fp32,
                       const std::vector<std::pair<std::int64_t, float>>& int8) {
    if (fp32.size() != int8.size())
        throw ValidationError("quant gap: capacity grids differ in length");
    QuantProfile prof;
    for (std::size_t i = 0; i < fp32.size(); ++i) {
        if (fp32[i].first != int8[i].first)
            throw ValidationError("quant gap: capacity grids disagree at entry " +
                                  std::to_string(i));
        QuantPoint pt;
        pt.capacity = fp32[i].first;
        pt.fp32_accuracy = fp32[i].second;
        pt.int8_accuracy = int8[i].second;
        pt.gap_pp = (fp32[i].second - int8[i].second) * 100.0f;
        prof.points.push_back(pt);
    }
    return prof;
}

}  // namespace nnprof
