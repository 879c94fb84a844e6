#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "nnprof/dataset.hpp"
#include "nnprof/plan.hpp"
#include "nnprof/store.hpp"
#include "nnprof/trainer.hpp"

namespace nnprof {

// Loads each dataset split once and hands out const references, so parallel
// workers share one in-memory copy. Optional per-class caps shrink both
// splits for smoke runs. ViT sees the 28x28 resample of 32x32 inputs.
class DatasetCache {
public:
    explicit DatasetCache(std::string data_dir, std::int64_t toy_train_per_class = 0,
                          std::int64_t toy_test_per_class = 0);

    // Loads on first use; raises ConfigurationError naming the fetch
    // command when the dataset is not cached on disk.
    const Dataset& get(const std::string& name, const std::string& split, Family family);

    const std::string& data_dir() const { return dir_; }

private:
    std::string dir_;
    std::int64_t toy_train_ = 0, toy_test_ = 0;
    std::mutex mu_;
    std::map<std::string, Dataset> cache_;
};

// One parsed store payload: the run plus its plan coordinates. FAILED rows
// keep the coordinates and carry the error message instead of metrics.
struct StoredRun {
    std::string plan_id;
    Phase phase = Phase::SECOND_PHASE;
    int repetition = 0;
    std::string status = "OK";  // OK | FAILED
    std::string error;
    RunRecord record;
    std::vector<double> prune_rates;    // PRUNE payloads only
    std::vector<float> prune_accuracy;  // test accuracy per rate
};

// Canonical JSON encoding (sorted keys, no wall-clock fields) so identical
// runs serialize to identical bytes.
std::string serialize_run(const StoredRun& run);
StoredRun parse_run(const std::string& payload);

// Executes one descriptor: train for sweep phases, train + prune curve for
// PRUNE, fp32 or observer-quantized training for QUANT.
StoredRun run_descriptor(const ExperimentPlan& plan, const RunDescriptor& d,
                         DatasetCache& cache);

struct RunPlanOptions {
    int worker_count = 1;
    std::string data_dir = "data";
    std::int64_t toy_train_per_class = 0;  // 0 keeps the full split
    std::int64_t toy_test_per_class = 0;
    std::function<void(const std::string&)> progress;  // per-record line; null = silent
    std::function<bool()> should_stop;  // polled between dispatches; null = never
};

struct RunPlanStats {
    int executed = 0;  // records written this call, FAILED included
    int skipped = 0;   // descriptors already present in the store
    int failed = 0;    // records written with status FAILED
    bool stopped = false;
};

// Runs every descriptor the store does not already hold, up to worker_count
// in parallel. Workers hand finished payloads to the coordinating thread,
// which is the sole store writer and appends them in descriptor order, so
// an interrupted run leaves a clean prefix and any worker count yields an
// identical store. A descriptor that throws is retried once, then recorded
// FAILED with the error message.
RunPlanStats run_plan(const ExperimentPlan& plan, ResultStore& store,
                      const RunPlanOptions& opt = {});

struct RecordFilter {
    std::optional<std::string> dataset;
    std::optional<Family> family;
    std::optional<Phase> phase;
    std::optional<std::string> variant;
    std::optional<std::int64_t> capacity_min;
    std::optional<std::int64_t> capacity_max;
    bool include_failed = false;
};

// Parses and filters the store's payloads, ordered by (capacity, seed) and
// then the remaining coordinates for a total order.
std::vector<StoredRun> query(const ResultStore& store, const RecordFilter& filter = {});

}  // namespace nnprof
