#include "nnprof/models.hpp"

#include <cmath>

#include "nnprof/ops.hpp"
#include "nnprof/rng.hpp"

namespace nnprof {

const std::vector<std::int64_t> kWidthGrid = {1,  2,  3,  5,   10,  20,
                                              30, 50, 100, 200, 500, 1000};

std::string family_str(Family f) {
    switch (f) {
        case Family::MLP: return "mlp";
        case Family::CNN: return "cnn";
        case Family::VIT: return "vit";
    }
    return "?";
}

Family family_parse(const std::string& s) {
    if (s == "mlp" || s == "dnn") return Family::MLP;
    if (s == "cnn") return Family::CNN;
    if (s == "vit") return Family::VIT;
    throw ValidationError("unknown model family: " + s);
}

std::string ShapePattern::str() const {
    std::string out;
    for (Relation r : relations)
        out += r == Relation::INCREASE ? '+' : (r == Relation::DECREASE ? '-' : '=');
    return out;
}

ShapePattern ShapePattern::parse(const std::string& s) {
    ShapePattern p;
    for (char c : s) {
        switch (c) {
            case '+': p.relations.push_back(Relation::INCREASE); break;
            case '-': p.relations.push_back(Relation::DECREASE); break;
            case '=': p.relations.push_back(Relation::EQUAL); break;
            default: throw ValidationError(std::string("bad pattern character: ") + c);
        }
    }
    return p;
}

std::int64_t Model::param_count() const {
    std::int64_t n = 0;
    for (const auto& p : params) n += p.tensor.size();
    return n;
}

std::int64_t count_params(const Model& m) { return m.param_count(); }

std::vector<std::int64_t> widths_from_pattern(std::int64_t base, const ShapePattern& pattern) {
    if (base < 1) throw ValidationError("base width must be at least 1");
    std::vector<std::int64_t> widths{base};
    for (Relation r : pattern.relations) {
        std::int64_t prev = widths.back();
        std::int64_t next = prev;
        if (r == Relation::INCREASE) next = prev * 2;
        if (r == Relation::DECREASE) next = (prev + 1) / 2;
        widths.push_back(std::max<std::int64_t>(1, next));
    }
    return widths;
}

std::vector<ModelSpec> enumerate_first_phase(int hidden_layers) {
    if (hidden_layers < 1 || hidden_layers > 4)
        throw ValidationError("hidden layer count must lie in 1..4, got " +
                              std::to_string(hidden_layers));
    const int gaps = hidden_layers - 1;
    int combos = 1;
    for (int i = 0; i < gaps; ++i) combos *= 3;
    std::vector<ModelSpec> out;
    out.reserve(static_cast<std::size_t>(combos) * kWidthGrid.size());
    for (int c = 0; c < combos; ++c) {
        ShapePattern pat;
        int rem = c;
        for (int g = 0; g < gaps; ++g) {
            int digits = 1;
            for (int i = g + 1; i < gaps; ++i) digits *= 3;
            int d = rem / digits;
            rem %= digits;
            pat.relations.push_back(static_cast<Relation>(d));
        }
        for (std::int64_t w : kWidthGrid) {
            ModelSpec spec;
            spec.family = Family::MLP;
            spec.capacity = w;
            spec.hidden_layers = hidden_layers;
            spec.pattern = pat;
            out.push_back(std::move(spec));
        }
    }
    return out;
}

void input_dims(const std::string& dataset, Family family, int& channels, int& height,
                int& width) {
    if (dataset == "mnist" || dataset == "fashion_mnist") {
        channels = 1;
        height = width = 28;
        return;
    }
    if (dataset == "cifar10") {
        channels = 3;
        if (family == Family::VIT)
            height = width = 28;  // consumed after the bilinear resize
        else
            height = width = 32;
        return;
    }
    throw ValidationError("unknown dataset: " + dataset);
}

namespace {

Tensor qw(QuantContext* qc, int idx, const Tensor& w) {
    return qc ? qc->weight(idx, w) : w;
}

Tensor qa(QuantContext* qc, int& site, const Tensor& x) {
    int s = site++;
    return qc ? qc->activation(s, x) : x;
}

void check_capacity(const ModelSpec& spec) {
    if (spec.capacity < 1)
        throw ValidationError("capacity must be at least 1, got " +
                              std::to_string(spec.capacity));
}

Tensor flatten_batch(const Tensor& x) {
    if (x.ndim() == 2) return x;
    if (x.ndim() == 4)
        return reshape(x, {x.dim(0), x.dim(1) * x.dim(2) * x.dim(3)});
    throw DimensionError("model input must be [B,C,H,W] or [B,F], got " +
                         shape_str(x.shape()));
}

// Standard fixed sinusoidal table over token positions.
Tensor positional_table(std::int64_t tokens, std::int64_t D) {
    std::vector<float> v(static_cast<std::size_t>(tokens * D));
    for (std::int64_t t = 0; t < tokens; ++t)
        for (std::int64_t d = 0; d < D; ++d) {
            double expo = static_cast<double>(2 * (d / 2)) / static_cast<double>(D);
            double angle = static_cast<double>(t) / std::pow(10000.0, expo);
            v[static_cast<std::size_t>(t * D + d)] =
                static_cast<float>((d % 2 == 0) ? std::sin(angle) : std::cos(angle));
        }
    return Tensor({tokens, D}, std::move(v));
}

}  // namespace

Model build_mlp(const ModelSpec& spec) {
    check_capacity(spec);
    if (spec.hidden_layers < 1)
        throw ConfigurationError("mlp needs at least one hidden layer");
    if (static_cast<int>(spec.pattern.relations.size()) != spec.hidden_layers - 1)
        throw ConfigurationError("pattern length " +
                                 std::to_string(spec.pattern.relations.size()) +
                                 " does not fit " + std::to_string(spec.hidden_layers) +
                                 " hidden layers");
    int C, H, W;
    input_dims(spec.dataset, Family::MLP, C, H, W);
    const std::int64_t in_features = static_cast<std::int64_t>(C) * H * W;
    auto widths = widths_from_pattern(spec.capacity, spec.pattern);

    Model m;
    m.spec = spec;
    Rng rng(spec.init_seed, "init");
    std::int64_t prev = in_features;
    for (std::size_t i = 0; i < widths.size(); ++i) {
        m.params.push_back({"fc" + std::to_string(i) + ".weight", ParamKind::Weight,
                            sample_normal(rng, {prev, widths[i]}, 0.0f, 0.1f, true)});
        m.params.push_back({"fc" + std::to_string(i) + ".bias", ParamKind::Bias,
                            Tensor::zeros({widths[i]}, true)});
        prev = widths[i];
    }
    m.params.push_back({"out.weight", ParamKind::Weight,
                        sample_normal(rng, {prev, 10}, 0.0f, 0.1f, true)});
    m.params.push_back({"out.bias", ParamKind::Bias, Tensor::zeros({10}, true)});

    auto params = m.params;
    const std::size_t layers = widths.size();
    m.forward = [params, layers](const Tensor& input, QuantContext* qc) {
        int site = 0;
        Tensor x = qa(qc, site, flatten_batch(input));
        for (std::size_t i = 0; i < layers; ++i) {
            const auto& w = params[2 * i].tensor;
            const auto& b = params[2 * i + 1].tensor;
            x = relu(add_bias(matmul(x, qw(qc, static_cast<int>(2 * i), w)), b));
            x = qa(qc, site, x);
        }
        const auto& w = params[2 * layers].tensor;
        const auto& b = params[2 * layers + 1].tensor;
        Tensor logits = add_bias(matmul(x, qw(qc, static_cast<int>(2 * layers), w)), b);
        return qa(qc, site, logits);
    };
    return m;
}

Model build_cnn(const ModelSpec& spec) {
    check_capacity(spec);
    int C, H, W;
    input_dims(spec.dataset, Family::CNN, C, H, W);
    const std::int64_t Co = spec.capacity;
    const std::int64_t OH = H - 2, OW = W - 2;
    const std::int64_t flat = Co * OH * OW;

    Model m;
    m.spec = spec;
    Rng rng(spec.init_seed, "init");
    const float kaiming = std::sqrt(2.0f / (static_cast<float>(C) * 9.0f));
    m.params.push_back({"conv.kernels", ParamKind::Weight,
                        sample_normal(rng, {Co, C, 3, 3}, 0.0f, kaiming, true)});
    m.params.push_back({"conv.bias", ParamKind::Bias, Tensor::zeros({Co}, true)});
    m.params.push_back({"fc.weight", ParamKind::Weight,
                        sample_normal(rng, {flat, 10}, 0.0f, 0.01f, true)});
    m.params.push_back({"fc.bias", ParamKind::Bias, Tensor::zeros({10}, true)});

    auto params = m.params;
    m.forward = [params, flat](const Tensor& input, QuantContext* qc) {
        int site = 0;
        Tensor x = qa(qc, site, input);
        x = relu(conv2d_3x3_valid(x, qw(qc, 0, params[0].tensor), params[1].tensor));
        x = qa(qc, site, x);
        x = reshape(x, {x.dim(0), flat});
        Tensor logits = add_bias(matmul(x, qw(qc, 2, params[2].tensor)), params[3].tensor);
        return qa(qc, site, logits);
    };
    return m;
}

Model build_vit(const ModelSpec& spec) {
    check_capacity(spec);
    int C, H, W;
    input_dims(spec.dataset, Family::VIT, C, H, W);
    const std::int64_t D = spec.capacity;
    const int patch = 4;  // 28/7
    const std::int64_t patch_dim = static_cast<std::int64_t>(C) * patch * patch;
    const std::int64_t tokens = 49 + 1;

    Model m;
    m.spec = spec;
    Rng rng(spec.init_seed, "init");
    auto dense = [&](const std::string& name, std::int64_t in, std::int64_t out) {
        m.params.push_back({name + ".weight", ParamKind::Weight,
                            sample_normal(rng, {in, out}, 0.0f, 0.1f, true)});
        m.params.push_back({name + ".bias", ParamKind::Bias, Tensor::zeros({out}, true)});
    };
    auto norm = [&](const std::string& name, std::int64_t d) {
        m.params.push_back({name + ".gain", ParamKind::Norm, Tensor::full({d}, 1.0f, true)});
        m.params.push_back({name + ".shift", ParamKind::Norm, Tensor::zeros({d}, true)});
    };

    dense("embed", patch_dim, D);
    m.params.push_back(
        {"cls.token", ParamKind::Token, sample_normal(rng, {D}, 0.0f, 0.1f, true)});
    for (int b = 0; b < 2; ++b) {
        std::string pre = "blk" + std::to_string(b);
        norm(pre + ".ln1", D);
        for (const char* w : {".attn.wq", ".attn.wk", ".attn.wv", ".attn.wo"})
            m.params.push_back({pre + w, ParamKind::Weight,
                                sample_normal(rng, {D, D}, 0.0f, 0.1f, true)});
        norm(pre + ".ln2", D);
        dense(pre + ".ffn1", D, D);
        dense(pre + ".ffn2", D, D);
    }
    norm("head.ln", D);
    dense("head", D, 10);

    Tensor pos = positional_table(tokens, D);  // fixed, not learnable
    auto params = m.params;
    auto index_of = [&params](const std::string& name) {
        for (std::size_t i = 0; i < params.size(); ++i)
            if (params[i].name == name) return static_cast<int>(i);
        throw ConfigurationError("missing parameter " + name);
    };
    struct Block {
        int ln1g, ln1s, wq, wk, wv, wo, ln2g, ln2s, f1w, f1b, f2w, f2b;
    };
    std::vector<Block> blocks;
    for (int b = 0; b < 2; ++b) {
        std::string pre = "blk" + std::to_string(b);
        blocks.push_back({index_of(pre + ".ln1.gain"), index_of(pre + ".ln1.shift"),
                          index_of(pre + ".attn.wq"), index_of(pre + ".attn.wk"),
                          index_of(pre + ".attn.wv"), index_of(pre + ".attn.wo"),
                          index_of(pre + ".ln2.gain"), index_of(pre + ".ln2.shift"),
                          index_of(pre + ".ffn1.weight"), index_of(pre + ".ffn1.bias"),
                          index_of(pre + ".ffn2.weight"), index_of(pre + ".ffn2.bias")});
    }
    const int embed_w = index_of("embed.weight"), embed_b = index_of("embed.bias");
    const int cls = index_of("cls.token");
    const int head_lng = index_of("head.ln.gain"), head_lns = index_of("head.ln.shift");
    const int head_w = index_of("head.weight"), head_b = index_of("head.bias");

    m.forward = [params, blocks, pos, patch, patch_dim, D, tokens, embed_w, embed_b, cls,
                 head_lng, head_lns, head_w, head_b](const Tensor& input, QuantContext* qc) {
        if (input.ndim() != 4 || input.dim(2) != 28 || input.dim(3) != 28)
            throw ConfigurationError("vit expects [B,C,28,28] input, got " +
                                     shape_str(input.shape()));
        int site = 0;
        Tensor x = qa(qc, site, input);
        const std::int64_t B = x.dim(0);
        Tensor tok = patchify(x, patch);  // [B,49,patch_dim]
        Tensor emb = reshape(add_bias(matmul(reshape(tok, {B * 49, patch_dim}),
                                             qw(qc, embed_w, params[embed_w].tensor)),
                                      params[embed_b].tensor),
                             {B, 49, D});
        emb = qa(qc, site, emb);
        Tensor seq = add_broadcast(prepend_token(emb, params[cls].tensor), pos);
        for (const auto& blk : blocks) {
            Tensor normed = layer_norm(seq, params[blk.ln1g].tensor, params[blk.ln1s].tensor);
            Tensor att = multi_head_attention(normed, qw(qc, blk.wq, params[blk.wq].tensor),
                                              qw(qc, blk.wk, params[blk.wk].tensor),
                                              qw(qc, blk.wv, params[blk.wv].tensor),
                                              qw(qc, blk.wo, params[blk.wo].tensor), 1);
            seq = qa(qc, site, add(seq, att));
            Tensor n2 = layer_norm(seq, params[blk.ln2g].tensor, params[blk.ln2s].tensor);
            Tensor h = relu(add_bias(
                matmul(reshape(n2, {B * tokens, D}), qw(qc, blk.f1w, params[blk.f1w].tensor)),
                params[blk.f1b].tensor));
            Tensor ffn = reshape(add_bias(matmul(h, qw(qc, blk.f2w, params[blk.f2w].tensor)),
                                          params[blk.f2b].tensor),
                                 {B, tokens, D});
            seq = qa(qc, site, add(seq, ffn));
        }
        Tensor head_in = layer_norm(select_token(seq, 0), params[head_lng].tensor,
                                    params[head_lns].tensor);
        head_in = qa(qc, site, head_in);
        Tensor logits = add_bias(matmul(head_in, qw(qc, head_w, params[head_w].tensor)),
                                 params[head_b].tensor);
        return qa(qc, site, logits);
    };
    return m;
}

Model build_model(const ModelSpec& spec) {
    switch (spec.family) {
        case Family::MLP: return build_mlp(spec);
        case Family::CNN: return build_cnn(spec);
        case Family::VIT: return build_vit(spec);
    }
    throw ConfigurationError("unknown model family");
}

Model clone_model(const Model& m) {
    Model fresh = build_model(m.spec);
    for (std::size_t i = 0; i < m.params.size(); ++i)
        fresh.params[i].tensor.values() = m.params[i].tensor.values();
    return fresh;
}

}  // namespace nnprof
