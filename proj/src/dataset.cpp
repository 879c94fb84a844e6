#include "nnprof/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "nnprof/errors.hpp"
#include "nnprof/rng.hpp"

namespace nnprof {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path, 0);
    in.seekg(0, std::ios::end);
    auto len = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> buf(len);
    if (len) in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(len));
    if (!in) throw FormatError("short read from " + path, 0);
    return buf;
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& path) {
    if (off + 4 > b.size())
        throw FormatError(path + ": truncated header", off);
    return (static_cast<std::uint32_t>(b[off]) << 24) |
           (static_cast<std::uint32_t>(b[off + 1]) << 16) |
           (static_cast<std::uint32_t>(b[off + 2]) << 8) |
           static_cast<std::uint32_t>(b[off + 3]);
}

void shuffle_indices(std::vector<std::int64_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        auto j = rng.next_below(i);
        std::swap(idx[i - 1], idx[static_cast<std::size_t>(j)]);
    }
}

}  // namespace

Tensor load_idx(const std::string& path) {
    auto buf = read_file(path);
    const std::uint32_t magic = be32(buf, 0, path);
    if (magic == 0x00000803u) {
        const std::int64_t n = be32(buf, 4, path);
        const std::int64_t h = be32(buf, 8, path);
        const std::int64_t w = be32(buf, 12, path);
        const std::size_t need = 16 + static_cast<std::size_t>(n * h * w);
        if (buf.size() < need)
            throw FormatError(path + ": image payload ends early", buf.size());
        std::vector<float> vals(static_cast<std::size_t>(n * h * w));
        for (std::size_t i = 0; i < vals.size(); ++i)
            vals[i] = static_cast<float>(buf[16 + i]);
        return Tensor({n, 1, h, w}, std::move(vals));
    }
    if (magic == 0x00000801u) {
        const std::int64_t n = be32(buf, 4, path);
        const std::size_t need = 8 + static_cast<std::size_t>(n);
        if (buf.size() < need)
            throw FormatError(path + ": label payload ends early", buf.size());
        std::vector<float> vals(static_cast<std::size_t>(n));
        for (std::size_t i = 0; i < vals.size(); ++i)
            vals[i] = static_cast<float>(buf[8 + i]);
        return Tensor({n}, std::move(vals));
    }
    throw FormatError(path + ": unrecognized idx magic", 0);
}

Dataset load_cifar10_binary(const std::vector<std::string>& paths, const std::string& split) {
    Dataset ds;
    ds.name = "cifar10";
    ds.split = split;
    ds.channels = 3;
    ds.height = 32;
    ds.width = 32;
    constexpr std::size_t kRecord = 3073;
    for (const auto& path : paths) {
        auto buf = read_file(path);
        if (buf.empty() || buf.size() % kRecord != 0)
            throw FormatError(path + ": length is not a multiple of 3073", buf.size());
        const std::size_t n = buf.size() / kRecord;
        for (std::size_t r = 0; r < n; ++r) {
            const std::uint8_t* rec = buf.data() + r * kRecord;
            int label = rec[0];
            if (label > 9)
                throw FormatError(path + ": label byte out of range", r * kRecord);
            ds.labels.push_back(label);
            for (std::size_t i = 0; i < 3072; ++i)
                ds.images.push_back(static_cast<float>(rec[1 + i]) / 255.0f);
        }
        ds.count += static_cast<std::int64_t>(n);
    }
    return ds;
}

namespace {

Dataset load_idx_pair(const std::string& name, const std::string& split,
                      const std::string& images_path, const std::string& labels_path) {
    Tensor images = load_idx(images_path);
    Tensor labels = load_idx(labels_path);
    if (images.ndim() != 4)
        throw FormatError(images_path + ": expected an image file", 0);
    if (labels.ndim() != 1)
        throw FormatError(labels_path + ": expected a label file", 0);
    if (images.dim(0) != labels.dim(0))
        throw FormatError(images_path + ": image/label counts differ", 0);
    Dataset ds;
    ds.name = name;
    ds.split = split;
    ds.count = images.dim(0);
    ds.channels = 1;
    ds.height = static_cast<int>(images.dim(2));
    ds.width = static_cast<int>(images.dim(3));
    ds.images.resize(images.values().size());
    for (std::size_t i = 0; i < ds.images.size(); ++i)
        ds.images[i] = images.values()[i] / 255.0f;
    ds.labels.resize(static_cast<std::size_t>(ds.count));
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        int y = static_cast<int>(labels.values()[i]);
        if (y < 0 || y > 9)
            throw FormatError(labels_path + ": label out of range", 8 + i);
        ds.labels[i] = y;
    }
    return ds;
}

std::vector<std::string> dataset_files(const std::string& name, const std::string& split) {
    if (name == "mnist" || name == "fashion_mnist") {
        if (split == "train") return {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"};
        return {"t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
    }
    if (name == "cifar10") {
        if (split == "train")
            return {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin",
                    "data_batch_4.bin", "data_batch_5.bin"};
        return {"test_batch.bin"};
    }
    throw ValidationError("unknown dataset: " + name);
}

}  // namespace

Dataset load_dataset(const std::string& name, const std::string& split,
                     const std::string& data_dir) {
    if (split != "train" && split != "test")
        throw ValidationError("split must be train or test, got " + split);
    namespace fs = std::filesystem;
    fs::path base = fs::path(data_dir) / name;
    auto files = dataset_files(name, split);
    if (name == "cifar10") {
        std::vector<std::string> paths;
        for (const auto& f : files) paths.push_back((base / f).string());
        Dataset ds = load_cifar10_binary(paths, split);
        return ds;
    }
    return load_idx_pair(name, split, (base / files[0]).string(), (base / files[1]).string());
}

bool dataset_cached(const std::string& name, const std::string& data_dir) {
    namespace fs = std::filesystem;
    fs::path base = fs::path(data_dir) / name;
    for (const auto& split : {"train", "test"})
        for (const auto& f : dataset_files(name, split))
            if (!fs::exists(base / f)) return false;
    return true;
}

Dataset normalize(Dataset ds) {
    for (auto& v : ds.images) v = (v - 0.5f) / 0.5f;
    ds.normalized = true;
    return ds;
}

DatasetView view_all(const Dataset& ds) {
    DatasetView v;
    v.data = &ds;
    v.indices.resize(static_cast<std::size_t>(ds.count));
    std::iota(v.indices.begin(), v.indices.end(), 0);
    return v;
}

SplitPlan SplitPlan::make(const Dataset& ds, std::uint64_t seed, double validation_fraction) {
    if (validation_fraction < 0.0 || validation_fraction >= 1.0)
        throw ValidationError("validation fraction must lie in [0,1)");
    SplitPlan plan;
    plan.validation_fraction = validation_fraction;
    plan.seed = seed;
    std::vector<std::int64_t> idx(static_cast<std::size_t>(ds.count));
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed ^ Rng::fnv1a(ds.name), "split");
    shuffle_indices(idx, rng);
    auto n_val = static_cast<std::size_t>(
        std::llround(validation_fraction * static_cast<double>(ds.count)));
    plan.validation_indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    plan.train_indices.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    return plan;
}

std::pair<DatasetView, DatasetView> split_train_validation(const Dataset& ds,
                                                           std::uint64_t seed,
                                                           double validation_fraction) {
    auto plan = SplitPlan::make(ds, seed, validation_fraction);
    DatasetView train{&ds, std::move(plan.train_indices)};
    DatasetView val{&ds, std::move(plan.validation_indices)};
    return {std::move(train), std::move(val)};
}

std::vector<std::vector<std::int64_t>> batches(const DatasetView& view, std::int64_t batch_size,
                                               std::uint64_t epoch_seed) {
    if (batch_size < 1) throw ValidationError("batch size must be at least 1");
    std::vector<std::int64_t> order = view.indices;
    Rng rng(epoch_seed, "shuffle");
    shuffle_indices(order, rng);
    std::vector<std::vector<std::int64_t>> out;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(batch_size)) {
        auto end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

std::pair<Tensor, std::vector<int>> gather(const Dataset& ds,
                                           const std::vector<std::int64_t>& indices) {
    const std::int64_t isz = ds.image_size();
    const std::int64_t B = static_cast<std::int64_t>(indices.size());
    std::vector<float> vals(static_cast<std::size_t>(B * isz));
    std::vector<int> labels(static_cast<std::size_t>(B));
    for (std::int64_t b = 0; b < B; ++b) {
        const float* src = ds.image_at(indices[static_cast<std::size_t>(b)]);
        std::copy(src, src + isz, vals.data() + b * isz);
        labels[static_cast<std::size_t>(b)] = ds.labels[static_cast<std::size_t>(
            indices[static_cast<std::size_t>(b)])];
    }
    return {Tensor({B, ds.channels, ds.height, ds.width}, std::move(vals)),
            std::move(labels)};
}

Dataset resize_bilinear_28(Dataset ds) {
    if (ds.height == 28 && ds.width == 28) return ds;
    if (ds.height != 32 || ds.width != 32)
        throw ValidationError("resize expects 32x32 input, got " + std::to_string(ds.height) +
                              "x" + std::to_string(ds.width));
    const int OH = 28, OW = 28;
    const double sy = 32.0 / OH, sx = 32.0 / OW;
    std::vector<float> out(static_cast<std::size_t>(ds.count) * ds.channels * OH * OW);
    for (std::int64_t n = 0; n < ds.count; ++n)
        for (int c = 0; c < ds.channels; ++c) {
            const float* src = ds.images.data() + (n * ds.channels + c) * 32 * 32;
            float* dst = out.data() + (n * ds.channels + c) * OH * OW;
            for (int y = 0; y < OH; ++y) {
                // half-pixel centers so the sample grid spans the image evenly
                double fy = (y + 0.5) * sy - 0.5;
                int y0 = static_cast<int>(std::floor(fy));
                double wy = fy - y0;
                int y0c = std::clamp(y0, 0, 31), y1c = std::clamp(y0 + 1, 0, 31);
                for (int x = 0; x < OW; ++x) {
                    double fx = (x + 0.5) * sx - 0.5;
                    int x0 = static_cast<int>(std::floor(fx));
                    double wx = fx - x0;
                    int x0c = std::clamp(x0, 0, 31), x1c = std::clamp(x0 + 1, 0, 31);
                    double top = src[y0c * 32 + x0c] * (1.0 - wx) + src[y0c * 32 + x1c] * wx;
                    double bot = src[y1c * 32 + x0c] * (1.0 - wx) + src[y1c * 32 + x1c] * wx;
                    dst[y * OW + x] = static_cast<float>(top * (1.0 - wy) + bot * wy);
                }
            }
        }
    ds.images = std::move(out);
    ds.height = OH;
    ds.width = OW;
    return ds;
}

Dataset stratified_subsample(const Dataset& ds, std::int64_t per_class, std::uint64_t seed) {
    if (per_class < 1) throw ValidationError("per-class count must be at least 1");
    std::vector<std::vector<std::int64_t>> by_class(10);
    for (std::int64_t i = 0; i < ds.count; ++i)
        by_class[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
    Rng rng(seed ^ Rng::fnv1a(ds.name), "toy");
    std::vector<std::int64_t> chosen;
    for (auto& bucket : by_class) {
        shuffle_indices(bucket, rng);
        auto take = std::min<std::size_t>(bucket.size(), static_cast<std::size_t>(per_class));
        chosen.insert(chosen.end(), bucket.begin(),
                      bucket.begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(chosen.begin(), chosen.end());
    Dataset out;
    out.name = ds.name;
    out.split = ds.split;
    out.channels = ds.channels;
    out.height = ds.height;
    out.width = ds.width;
    out.normalized = ds.normalized;
    out.count = static_cast<std::int64_t>(chosen.size());
    const std::int64_t isz = ds.image_size();
    out.images.reserve(static_cast<std::size_t>(out.count * isz));
    for (auto i : chosen) {
        const float* src = ds.image_at(i);
        out.images.insert(out.images.end(), src, src + isz);
        out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace nnprof
