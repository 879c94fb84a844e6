#include "nnprof/tensor.hpp"

#include <sstream>

namespace nnprof {

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, std::vector<float> values, bool requires_grad) {
    for (auto d : shape)
        if (d < 0) throw DimensionError("tensor: negative extent in shape " + shape_str(shape));
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        throw DimensionError("tensor: shape " + shape_str(shape) + " wants " +
                             std::to_string(shape_numel(shape)) + " values, got " +
                             std::to_string(values.size()));
    data_ = std::make_shared<TensorData>();
    data_->shape = std::move(shape);
    data_->values = std::move(values);
    data_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<std::size_t>(n), 0.0f),
                  requires_grad);
}

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
    auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<float>(static_cast<std::size_t>(n), value),
                  requires_grad);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
    return Tensor(Shape{}, std::vector<float>{value}, requires_grad);
}

float Tensor::item() const {
    if (size() != 1)
        throw DimensionError("item: tensor has " + std::to_string(size()) + " elements");
    return data_->values[0];
}

Tensor Tensor::detached_copy() const {
    return Tensor(data_->shape, data_->values, false);
}

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::function<void()> backward_fn) {
    entries_.push_back(std::move(backward_fn));
}

void Tape::backward(Tensor& loss) {
    if (!loss.defined() || loss.size() != 1)
        throw DimensionError("backward: loss must be a scalar tensor");
    loss.grad()[0] = 1.0f;
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
}

void Tape::clear() { entries_.clear(); }

TapeScope::TapeScope(Tape& tape) : prev_(g_active_tape) { g_active_tape = &tape; }

TapeScope::~TapeScope() { g_active_tape = prev_; }

}  // namespace nnprof
