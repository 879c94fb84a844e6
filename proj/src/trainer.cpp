#include "nnprof/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "nnprof/errors.hpp"
#include "nnprof/ops.hpp"
#include "nnprof/rng.hpp"

namespace nnprof {

void TrainConfig::validate() const {
    if (batch_size < 1) throw ValidationError("batch size must be at least 1");
    if (epochs < 1) throw ValidationError("epoch count must be at least 1");
    if (learning_rate < 0.0f) throw ValidationError("learning rate must be non-negative");
    if (beta1 < 0.0f || beta1 >= 1.0f || beta2 < 0.0f || beta2 >= 1.0f)
        throw ValidationError("adam betas must lie in [0,1)");
    if (epsilon <= 0.0f) throw ValidationError("adam epsilon must be positive");
    if (validation_fraction <= 0.0 || validation_fraction >= 1.0)
        throw ValidationError("validation fraction must lie in (0,1)");
    if (repetitions < 0) throw ValidationError("repetitions must be non-negative");
}

int TrainConfig::effective_repetitions(Family f) const {
    if (repetitions > 0) return repetitions;
    return f == Family::MLP ? 30 : 10;
}

AdamState AdamState::zeros_like(const std::vector<Param>& params) {
    AdamState st;
    for (const auto& p : params) {
        st.m.emplace_back(p.tensor.values().size(), 0.0f);
        st.v.emplace_back(p.tensor.values().size(), 0.0f);
    }
    return st;
}

void adam_step(std::vector<Param>& params, AdamState& state, std::int64_t t,
               const TrainConfig& cfg) {
    if (t < 1) throw std::logic_error("adam step index must be 1-based");
    if (state.m.size() != params.size() || state.v.size() != params.size())
        throw std::logic_error("adam state does not match parameter list");
    const double b1 = cfg.beta1, b2 = cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& p = params[i].tensor;
        if (state.m[i].size() != p.values().size())
            throw std::logic_error("adam state shape mismatch at " + params[i].name);
        auto& g = p.grad();  // zero-filled if nothing accumulated
        auto& m = state.m[i];
        auto& v = state.v[i];
        for (std::size_t j = 0; j < g.size(); ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            p.values()[j] = static_cast<float>(
                p.values()[j] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
        }
    }
}

int best_epoch_of(const std::vector<float>& val_accuracy) {
    int best = 0;
    float best_acc = -1.0f;
    for (std::size_t i = 0; i < val_accuracy.size(); ++i)
        if (val_accuracy[i] > best_acc) {
            best_acc = val_accuracy[i];
            best = static_cast<int>(i) + 1;
        }
    return best;
}

float evaluate(const Model& model, const DatasetView& view, QuantContext* qc) {
    if (view.indices.empty()) return 0.0f;
    constexpr std::int64_t kEvalBatch = 500;
    std::int64_t correct = 0;
    for (std::size_t start = 0; start < view.indices.size();
         start += static_cast<std::size_t>(kEvalBatch)) {
        auto end = std::min(view.indices.size(), start + static_cast<std::size_t>(kEvalBatch));
        std::vector<std::int64_t> idx(view.indices.begin() + static_cast<std::ptrdiff_t>(start),
                                      view.indices.begin() + static_cast<std::ptrdiff_t>(end));
        auto [images, labels] = gather(*view.data, idx);
        Tensor logits = model.forward(images, qc);  // no tape active: inference
        const std::int64_t B = logits.dim(0), K = logits.dim(1);
        for (std::int64_t b = 0; b < B; ++b) {
            const float* row = logits.ptr() + b * K;
            int arg = 0;
            for (int k = 1; k < K; ++k)
                if (row[k] > row[arg]) arg = k;  // ties keep the lowest index
            if (arg == labels[static_cast<std::size_t>(b)]) ++correct;
        }
    }
    return static_cast<float>(static_cast<double>(correct) /
                              static_cast<double>(view.indices.size()));
}

namespace {

std::vector<std::vector<float>> snapshot(const std::vector<Param>& params) {
    std::vector<std::vector<float>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.tensor.values());
    return out;
}

void restore(std::vector<Param>& params, const std::vector<std::vector<float>>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].tensor.values() = snap[i];
}

}  // namespace

RunRecord train_one(const ModelSpec& spec, const TrainConfig& cfg, std::uint64_t seed,
                    const Dataset& train, const Dataset& test, const TrainHooks& hooks) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();

    ModelSpec seeded = spec;
    seeded.init_seed = seed;
    Model model = build_model(seeded);

    RunRecord rec;
    rec.spec = seeded;
    rec.seed = seed;
    rec.param_count = model.param_count();

    auto [train_view, val_view] = split_train_validation(train, seed, cfg.validation_fraction);
    AdamState state = AdamState::zeros_like(model.params);

    auto best_weights = snapshot(model.params);
    float best_val = -1.0f;
    std::int64_t step = 0;

    for (int epoch = 1; epoch <= cfg.epochs && !rec.diverged; ++epoch) {
        if (hooks.set_mode) hooks.set_mode(true);
        const std::uint64_t epoch_seed =
            Rng::splitmix(seed ^ Rng::splitmix(static_cast<std::uint64_t>(epoch)));
        double loss_sum = 0.0;
        std::int64_t batches_done = 0;
        for (const auto& idx : batches(train_view, cfg.batch_size, epoch_seed)) {
            auto [images, labels] = gather(train, idx);
            Tape tape;
            float loss_value;
            {
                TapeScope scope(tape);
                Tensor logits = model.forward(images, hooks.qc);
                Tensor loss = softmax_cross_entropy(logits, labels);
                loss_value = loss.item();
                if (!std::isfinite(loss_value)) {
                    rec.diverged = true;
                    rec.diverged_epoch = epoch;
                    break;
                }
                tape.backward(loss);
            }
            adam_step(model.params, state, ++step, cfg);
            for (auto& p : model.params) p.tensor.zero_grad();
            loss_sum += loss_value;
            ++batches_done;
        }
        if (rec.diverged) break;

        rec.train_loss.push_back(
            static_cast<float>(loss_sum / static_cast<double>(batches_done)));
        if (hooks.set_mode) hooks.set_mode(false);
        const float val_acc = evaluate(model, val_view, hooks.qc);
        rec.val_accuracy.push_back(val_acc);
        if (val_acc > best_val) {
            best_val = val_acc;
            best_weights = snapshot(model.params);
            if (hooks.save_best) hooks.save_best();
        }
    }

    rec.best_epoch = best_epoch_of(rec.val_accuracy);
    restore(model.params, best_weights);
    if (hooks.restore_best) hooks.restore_best();
    if (hooks.set_mode) hooks.set_mode(false);
    rec.test_accuracy = evaluate(model, view_all(test), hooks.qc);
    rec.train_accuracy = evaluate(model, train_view, hooks.qc);
    rec.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (hooks.final_model) hooks.final_model(model);
    return rec;
}

}  // namespace nnprof
