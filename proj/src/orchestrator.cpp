#include "nnprof/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <set>
#include <thread>
#include <tuple>
#include <utility>

#include "json.hpp"
#include "nnprof/errors.hpp"
#include "nnprof/prune.hpp"
#include "nnprof/quant.hpp"
#include "nnprof/rng.hpp"

namespace nnprof {

namespace {

using nlohmann::json;

std::uint64_t toy_seed(const std::string& name, const std::string& split) {
    return Rng::splitmix(fnv1a64("toy|" + name + "|" + split));
}

}  // namespace

DatasetCache::DatasetCache(std::string data_dir, std::int64_t toy_train_per_class,
                           std::int64_t toy_test_per_class)
    : dir_(std::move(data_dir)), toy_train_(toy_train_per_class), toy_test_(toy_test_per_class) {}

const Dataset& DatasetCache::get(const std::string& name, const std::string& split,
                                 Family family) {
    // Only ViT needs the 28x28 resample, and only CIFAR-10 is not 28x28
    // already, so other (name, family) pairs share one cache entry.
    const bool resample = family == Family::VIT && name == "cifar10";
    const std::string key = name + "/" + split + (resample ? "/28" : "");

    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;

    if (!dataset_cached(name, dir_))
        throw ConfigurationError("dataset '" + name + "' is not cached under '" + dir_ +
                                 "'; run the fetch command first");
    Dataset ds = load_dataset(name, split, dir_);
    const std::int64_t per_class = split == "train" ? toy_train_ : toy_test_;
    if (per_class > 0) ds = stratified_subsample(ds, per_class, toy_seed(name, split));
    if (resample) ds = resize_bilinear_28(std::move(ds));
    ds = normalize(std::move(ds));
    return cache_.emplace(key, std::move(ds)).first->second;
}

std::string serialize_run(const StoredRun& run) {
    json j;
    j["plan_id"] = run.plan_id;
    j["phase"] = phase_str(run.phase);
    j["repetition"] = run.repetition;
    j["status"] = run.status;
    if (!run.error.empty()) j["error"] = run.error;

    j["dataset"] = run.record.spec.dataset;
    j["family"] = family_str(run.record.spec.family);
    j["capacity"] = run.record.spec.capacity;
    j["hidden_layers"] = run.record.spec.hidden_layers;
    j["pattern"] = run.record.spec.pattern.str();
    j["run_seed"] = run.record.seed;
    j["variant"] = run.record.variant;

    j["param_count"] = run.record.param_count;
    j["best_epoch"] = run.record.best_epoch;
    j["test_accuracy"] = static_cast<double>(run.record.test_accuracy);
    j["train_accuracy"] = static_cast<double>(run.record.train_accuracy);
    j["diverged"] = run.record.diverged;
    j["diverged_epoch"] = run.record.diverged_epoch;
    json losses = json::array();
    for (float v : run.record.train_loss) losses.push_back(static_cast<double>(v));
    j["train_loss"] = losses;
    json vals = json::array();
    for (float v : run.record.val_accuracy) vals.push_back(static_cast<double>(v));
    j["val_accuracy"] = vals;

    if (!run.prune_rates.empty()) {
        j["prune_rates"] = run.prune_rates;
        json accs = json::array();
        for (float v : run.prune_accuracy) accs.push_back(static_cast<double>(v));
        j["prune_accuracy"] = accs;
    }
    // Wall-clock time stays out of the payload so identical runs serialize
    // to identical bytes.
    return j.dump();
}

namespace {

template <typename T>
T field(const json& j, const std::string& name) {
    if (!j.contains(name))
        throw FormatError("store payload is missing field '" + name + "'", 0);
    try {
        return j.at(name).get<T>();
    } catch (const json::exception&) {
        throw FormatError("store payload field '" + name + "' has the wrong type", 0);
    }
}

template <typename T>
T field_or(const json& j, const std::string& name, T fallback) {
    if (!j.contains(name)) return fallback;
    return field<T>(j, name);
}

}  // namespace

StoredRun parse_run(const std::string& payload) {
    json j;
    try {
        j = json::parse(payload);
    } catch (const json::exception& e) {
        throw FormatError(std::string("store payload is not valid JSON: ") + e.what(), 0);
    }
    StoredRun run;
    run.plan_id = field<std::string>(j, "plan_id");
    run.phase = phase_parse(field<std::string>(j, "phase"));
    run.repetition = field<int>(j, "repetition");
    run.status = field<std::string>(j, "status");
    run.error = field_or<std::string>(j, "error", "");

    run.record.spec.dataset = field<std::string>(j, "dataset");
    run.record.spec.family = family_parse(field<std::string>(j, "family"));
    run.record.spec.capacity = field<std::int64_t>(j, "capacity");
    run.record.spec.hidden_layers = field<int>(j, "hidden_layers");
    run.record.spec.pattern = ShapePattern::parse(field<std::string>(j, "pattern"));
    run.record.seed = field<std::uint64_t>(j, "run_seed");
    run.record.spec.init_seed = run.record.seed;
    run.record.variant = field<std::string>(j, "variant");

    run.record.param_count = field<std::int64_t>(j, "param_count");
    run.record.best_epoch = field<int>(j, "best_epoch");
    run.record.test_accuracy = field<float>(j, "test_accuracy");
    run.record.train_accuracy = field<float>(j, "train_accuracy");
    run.record.diverged = field<bool>(j, "diverged");
    run.record.diverged_epoch = field<int>(j, "diverged_epoch");
    run.record.train_loss = field<std::vector<float>>(j, "train_loss");
    run.record.val_accuracy = field<std::vector<float>>(j, "val_accuracy");

    run.prune_rates = field_or<std::vector<double>>(j, "prune_rates", {});
    run.prune_accuracy = field_or<std::vector<float>>(j, "prune_accuracy", {});
    return run;
}

StoredRun run_descriptor(const ExperimentPlan& plan, const RunDescriptor& d,
                         DatasetCache& cache) {
    const Dataset& train = cache.get(d.spec.dataset, "train", d.spec.family);
    const Dataset& test = cache.get(d.spec.dataset, "test", d.spec.family);

    StoredRun sr;
    sr.plan_id = plan.id;
    sr.phase = d.phase;
    sr.repetition = d.repetition;

    switch (d.phase) {
        case Phase::FIRST_PHASE:
        case Phase::SECOND_PHASE:
            sr.record = train_one(d.spec, plan.train, d.run_seed, train, test);
            break;
        case Phase::QUANT:
            sr.record = d.variant == "qat"
                            ? qat_train(d.spec, plan.train, d.run_seed, train, test)
                            : train_one(d.spec, plan.train, d.run_seed, train, test);
            break;
        case Phase::PRUNE: {
            Model trained;
            TrainHooks hooks;
            hooks.final_model = [&trained](Model& m) { trained = std::move(m); };
            sr.record = train_one(d.spec, plan.train, d.run_seed, train, test, hooks);
            sr.prune_rates = plan.prune_rates.empty() ? default_prune_rates() : plan.prune_rates;
            sr.prune_accuracy = prune_curve(trained, sr.prune_rates, view_all(test));
            break;
        }
    }
    sr.record.variant = d.variant;
    return sr;
}

namespace {

StoredRun failed_run(const ExperimentPlan& plan, const RunDescriptor& d,
                     const std::string& error) {
    StoredRun sr;
    sr.plan_id = plan.id;
    sr.phase = d.phase;
    sr.repetition = d.repetition;
    sr.status = "FAILED";
    sr.error = error;
    sr.record.spec = d.spec;
    sr.record.seed = d.run_seed;
    sr.record.variant = d.variant;
    return sr;
}

std::string progress_line(std::size_t written, std::size_t total, const RunDescriptor& d,
                          const StoredRun& sr) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "[%zu/%zu] ", written, total);
    std::string line = buf + d.identity;
    if (sr.status == "FAILED") {
        line += " FAILED: " + sr.error;
    } else {
        std::snprintf(buf, sizeof(buf), " test=%.4f (%.1fs)", sr.record.test_accuracy,
                      sr.record.wall_time);
        line += buf;
        if (sr.record.diverged) line += " DIVERGED";
    }
    return line;
}

}  // namespace

RunPlanStats run_plan(const ExperimentPlan& plan, ResultStore& store,
                      const RunPlanOptions& opt) {
    plan.validate();
    if (opt.worker_count < 1) throw ValidationError("worker_count must be >= 1");
    if (store.read_only()) throw ConfigurationError("run_plan needs a writable store");

    const std::vector<RunDescriptor> all = expand_plan(plan);
    RunPlanStats stats;
    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < all.size(); ++i) {
        if (store.contains(all[i].content_key))
            ++stats.skipped;
        else
            pending.push_back(i);
    }
    if (pending.empty()) return stats;

    DatasetCache cache(opt.data_dir, opt.toy_train_per_class, opt.toy_test_per_class);
    {
        // Load every needed split before spawning workers; afterwards the
        // cache is read-only and lock contention is a non-issue.
        std::set<std::string> seen;
        for (std::size_t i : pending) {
            const auto& spec = all[i].spec;
            if (seen.insert(spec.dataset + "|" + family_str(spec.family)).second) {
                cache.get(spec.dataset, "train", spec.family);
                cache.get(spec.dataset, "test", spec.family);
            }
        }
    }

    std::mutex mu;
    std::condition_variable cv;
    std::map<std::size_t, StoredRun> finished;  // pending slot -> result
    std::size_t next_dispatch = 0;
    int active_workers = 0;
    bool stop = false;

    auto worker = [&]() {
        for (;;) {
            std::size_t slot;
            {
                std::lock_guard<std::mutex> lock(mu);
                if (stop || next_dispatch >= pending.size()) break;
                slot = next_dispatch++;
            }
            const RunDescriptor& d = all[pending[slot]];
            StoredRun sr;
            try {
                sr = run_descriptor(plan, d, cache);
            } catch (const std::exception&) {
                try {
                    sr = run_descriptor(plan, d, cache);  // one retry
                } catch (const std::exception& e) {
                    sr = failed_run(plan, d, e.what());
                }
            }
            {
                std::lock_guard<std::mutex> lock(mu);
                finished.emplace(slot, std::move(sr));
            }
            cv.notify_all();
        }
        {
            std::lock_guard<std::mutex> lock(mu);
            --active_workers;
        }
        cv.notify_all();
    };

    const int nworkers =
        static_cast<int>(std::min<std::size_t>(opt.worker_count, pending.size()));
    std::vector<std::thread> threads;
    threads.reserve(nworkers);
    {
        std::lock_guard<std::mutex> lock(mu);
        active_workers = nworkers;
    }
    for (int i = 0; i < nworkers; ++i) threads.emplace_back(worker);

    // Sole writer: append in descriptor order so any interruption leaves a
    // clean prefix and the file bytes never depend on the worker count.
    std::size_t next_write = 0;
    {
        std::unique_lock<std::mutex> lock(mu);
        for (;;) {
            auto it = finished.find(next_write);
            if (it != finished.end()) {
                StoredRun sr = std::move(it->second);
                finished.erase(it);
                const RunDescriptor& d = all[pending[next_write]];
                lock.unlock();
                store.append(d.content_key, serialize_run(sr));
                ++stats.executed;
                if (sr.status == "FAILED") ++stats.failed;
                if (opt.progress)
                    opt.progress(progress_line(stats.executed + stats.skipped,
                                               all.size(), d, sr));
                lock.lock();
                ++next_write;
                continue;
            }
            if (next_write >= pending.size()) break;
            if (!stop && opt.should_stop && opt.should_stop()) stop = true;
            // After a stop, in-flight slots may still land; once every
            // worker has exited, a missing next slot means it never will.
            if (stop && active_workers == 0) break;
            cv.wait_for(lock, std::chrono::milliseconds(20));
        }
        stop = true;
    }
    cv.notify_all();
    for (auto& t : threads) t.join();
    stats.stopped = next_write < pending.size();
    return stats;
}

std::vector<StoredRun> query(const ResultStore& store, const RecordFilter& filter) {
    if (filter.capacity_min && filter.capacity_max &&
        *filter.capacity_min > *filter.capacity_max)
        throw ValidationError("record filter: capacity_min exceeds capacity_max");
    if (filter.variant && *filter.variant != "fp32" && *filter.variant != "qat")
        throw ValidationError("record filter: unknown variant '" + *filter.variant + "'");

    std::vector<StoredRun> out;
    for (const auto& rec : store.records()) {
        StoredRun sr = parse_run(rec.payload);
        if (!filter.include_failed && sr.status != "OK") continue;
        if (filter.dataset && sr.record.spec.dataset != *filter.dataset) continue;
        if (filter.family && sr.record.spec.family != *filter.family) continue;
        if (filter.phase && sr.phase != *filter.phase) continue;
        if (filter.variant && sr.record.variant != *filter.variant) continue;
        if (filter.capacity_min && sr.record.spec.capacity < *filter.capacity_min) continue;
        if (filter.capacity_max && sr.record.spec.capacity > *filter.capacity_max) continue;
        out.push_back(std::move(sr));
    }
    std::sort(out.begin(), out.end(), [](const StoredRun& a, const StoredRun& b) {
        const auto key = [](const StoredRun& r) {
            return std::make_tuple(r.record.spec.capacity, r.record.seed, r.record.variant,
                                   r.record.spec.dataset, family_str(r.record.spec.family),
                                   r.record.spec.hidden_layers, r.record.spec.pattern.str(),
                                   r.repetition);
        };
        return key(a) < key(b);
    });
    return out;
}

}  // namespace nnprof
