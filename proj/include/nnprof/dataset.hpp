#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nnprof/tensor.hpp"

namespace nnprof {

// Immutable after load; shared read-only across parallel runs.
struct Dataset {
    std::string name;   // mnist | fashion_mnist | cifar10
    std::string split;  // train | test
    std::int64_t count = 0;
    int channels = 0, height = 0, width = 0;
    std::vector<float> images;  // [N,C,H,W] flattened
    std::vector<int> labels;
    bool normalized = false;

    std::int64_t image_size() const {
        return static_cast<std::int64_t>(channels) * height * width;
    }
    const float* image_at(std::int64_t i) const { return images.data() + i * image_size(); }
};

// Indices into a Dataset; the unit trainers and evaluators consume views so
// train/validation share one backing store.
struct DatasetView {
    const Dataset* data = nullptr;
    std::vector<std::int64_t> indices;

    std::int64_t size() const { return static_cast<std::int64_t>(indices.size()); }
};

DatasetView view_all(const Dataset& ds);

struct SplitPlan {
    double validation_fraction = 0.10;
    std::uint64_t seed = 0;
    std::vector<std::int64_t> train_indices;
    std::vector<std::int64_t> validation_indices;

    static SplitPlan make(const Dataset& ds, std::uint64_t seed,
                          double validation_fraction = 0.10);
};

// Big-endian IDX container. Images (magic 0x803) come back as [N,1,H,W with
// pixel bytes as floats 0..255; labels (magic 0x801) as [N].
Tensor load_idx(const std::string& path);

// Five train batches + one test batch of 3073-byte records -> [N,3,32,32].
Dataset load_cifar10_binary(const std::vector<std::string>& paths, const std::string& split);

// Reads <data_dir>/<name>/<canonical files>, scales pixels to [0,1].
Dataset load_dataset(const std::string& name, const std::string& split,
                     const std::string& data_dir);

// True when every file load_dataset needs is present.
bool dataset_cached(const std::string& name, const std::string& data_dir);

// (x - 0.5) / 0.5: [0,1] pixels -> [-1,1].
Dataset normalize(Dataset ds);

std::pair<DatasetView, DatasetView> split_train_validation(const Dataset& ds,
                                                           std::uint64_t seed,
                                                           double validation_fraction = 0.10);

// Deterministic per-epoch shuffle of the view, chopped into index batches;
// the final partial batch is kept.
std::vector<std::vector<std::int64_t>> batches(const DatasetView& view, std::int64_t batch_size,
                                               std::uint64_t epoch_seed);

// Materialize a batch: images [B,C,H,W] plus labels.
std::pair<Tensor, std::vector<int>> gather(const Dataset& ds,
                                           const std::vector<std::int64_t>& indices);

// 32x32 -> 28x28 bilinear resample (half-pixel centers); 28x28 passes through.
Dataset resize_bilinear_28(Dataset ds);

// Class-stratified subset for smoke runs: per_class examples of each label.
Dataset stratified_subsample(const Dataset& ds, std::int64_t per_class, std::uint64_t seed);

}  // namespace nnprof
