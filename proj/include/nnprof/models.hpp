#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "nnprof/tensor.hpp"

namespace nnprof {

enum class Family { MLP, CNN, VIT };

std::string family_str(Family f);
Family family_parse(const std::string& s);

enum class Relation { INCREASE, DECREASE, EQUAL };

// Inter-layer width relations; one entry per gap between hidden layers.
struct ShapePattern {
    std::vector<Relation> relations;

    std::string str() const;  // '+', '-', '=' per relation; empty for one layer
    static ShapePattern parse(const std::string& s);
    bool operator==(const ShapePattern&) const = default;
};

struct ModelSpec {
    Family family = Family::MLP;
    std::string dataset = "mnist";
    std::int64_t capacity = 1;  // MLP base width / CNN channels / ViT hidden dim
    int hidden_layers = 1;      // MLP only
    ShapePattern pattern;       // MLP only
    std::uint64_t init_seed = 0;

    bool operator==(const ModelSpec&) const = default;
};

enum class ParamKind { Weight, Bias, Norm, Token };

struct Param {
    std::string name;
    ParamKind kind = ParamKind::Weight;
    Tensor tensor;
};

// Hook interface for quantization-aware training: the model threads every
// weight use and a fixed set of activation sites through these calls.
class QuantContext {
public:
    virtual ~QuantContext() = default;
    virtual Tensor weight(int param_index, const Tensor& w) = 0;
    virtual Tensor activation(int site, const Tensor& x) = 0;
};

struct Model {
    ModelSpec spec;
    std::vector<Param> params;
    std::function<Tensor(const Tensor&, QuantContext*)> forward;

    std::int64_t param_count() const;
};

std::int64_t count_params(const Model& m);

// The capacity sweep grid shared by all families.
extern const std::vector<std::int64_t> kWidthGrid;

// Cross product of all 3^(L-1) shape patterns with the width grid.
std::vector<ModelSpec> enumerate_first_phase(int hidden_layers);

// base width through the pattern: INCREASE doubles, DECREASE halves
// (ceiling), EQUAL copies; never below one node.
std::vector<std::int64_t> widths_from_pattern(std::int64_t base, const ShapePattern& pattern);

// Input geometry each family sees for a dataset (ViT consumes the 28x28
// resize of CIFAR-10).
void input_dims(const std::string& dataset, Family family, int& channels, int& height,
                int& width);

Model build_mlp(const ModelSpec& spec);
Model build_cnn(const ModelSpec& spec);
Model build_vit(const ModelSpec& spec);
Model build_model(const ModelSpec& spec);

// Same architecture and seed, then current parameter values copied over.
Model clone_model(const Model& m);

}  // namespace nnprof
