#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "nnprof/errors.hpp"

namespace nnprof {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorData {
    Shape shape;
    std::vector<float> values;
    std::vector<float> grad;  // allocated lazily on first accumulation
    bool requires_grad = false;

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), 0.0f);
    }
};

// Float32 tensor with shared storage. Copies are shallow; two Tensor handles
// to the same node see each other's mutations, which is what the tape needs.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<float> values, bool requires_grad = false);

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float value, bool requires_grad = false);
    static Tensor scalar(float value, bool requires_grad = false);

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return data_->shape; }
    int ndim() const { return static_cast<int>(data_->shape.size()); }
    std::int64_t dim(int i) const { return data_->shape[static_cast<std::size_t>(i)]; }
    std::int64_t size() const { return static_cast<std::int64_t>(data_->values.size()); }

    std::vector<float>& values() { return data_->values; }
    const std::vector<float>& values() const { return data_->values; }
    float* ptr() { return data_->values.data(); }
    const float* ptr() const { return data_->values.data(); }

    bool requires_grad() const { return data_->requires_grad; }
    void set_requires_grad(bool v) { data_->requires_grad = v; }

    bool has_grad() const { return !data_->grad.empty(); }
    std::vector<float>& grad() {
        data_->ensure_grad();
        return data_->grad;
    }
    const std::vector<float>& grad_view() const { return data_->grad; }
    void zero_grad() {
        if (!data_->grad.empty()) data_->grad.assign(data_->values.size(), 0.0f);
    }

    float item() const;

    Tensor detached_copy() const;  // deep copy of values, no grad, no history

    const std::shared_ptr<TensorData>& node() const { return data_; }

private:
    std::shared_ptr<TensorData> data_;
};

// Reverse-mode tape. Ops push a backward closure as they execute; backward()
// seeds d(loss) = 1 and replays the closures newest-first. Creation order is
// a topological order of the dataflow graph, so the reverse replay visits
// every node after all of its consumers.
class Tape {
public:
    void record(std::function<void()> backward_fn);
    void backward(Tensor& loss);
    void clear();
    std::size_t size() const { return entries_.size(); }

    // Tape currently recording on this thread, or nullptr (inference mode).
    static Tape* active();

private:
    friend class TapeScope;
    std::vector<std::function<void()>> entries_;
};

// While alive, ops on this thread record onto the given tape.
class TapeScope {
public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

private:
    Tape* prev_;
};

// True when the op should push a backward closure for this result.
inline bool grad_enabled(bool any_input_requires_grad) {
    return any_input_requires_grad && Tape::active() != nullptr;
}

}  // namespace nnprof
