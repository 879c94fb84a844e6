#include "nnprof/plan.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"
#include "nnprof/errors.hpp"
#include "nnprof/prune.hpp"
#include "nnprof/rng.hpp"

namespace nnprof {

namespace {

using nlohmann::json;

constexpr int kPlanVersion = 1;

const std::set<std::string> kKnownDatasets = {"mnist", "fashion_mnist", "cifar10"};

std::vector<std::int64_t> iota_grid(std::int64_t lo, std::int64_t hi) {
    std::vector<std::int64_t> g(static_cast<std::size_t>(hi - lo + 1));
    std::iota(g.begin(), g.end(), lo);
    return g;
}

void check_grid(const std::vector<std::int64_t>& grid, const std::string& field) {
    if (grid.empty()) throw ValidationError("plan field '" + field + "' must be non-empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (grid[i] < 1)
            throw ValidationError("plan field '" + field + "' holds non-positive capacity " +
                                  std::to_string(grid[i]));
        if (i > 0 && grid[i] <= grid[i - 1])
            throw ValidationError("plan field '" + field + "' must be strictly increasing");
    }
}

}  // namespace

std::string phase_str(Phase p) {
    switch (p) {
        case Phase::FIRST_PHASE: return "FIRST_PHASE";
        case Phase::SECOND_PHASE: return "SECOND_PHASE";
        case Phase::PRUNE: return "PRUNE";
        case Phase::QUANT: return "QUANT";
    }
    return "?";
}

Phase phase_parse(const std::string& s) {
    if (s == "FIRST_PHASE") return Phase::FIRST_PHASE;
    if (s == "SECOND_PHASE") return Phase::SECOND_PHASE;
    if (s == "PRUNE") return Phase::PRUNE;
    if (s == "QUANT") return Phase::QUANT;
    throw ValidationError("unknown phase: " + s);
}

std::vector<std::int64_t> default_capacity_grid(Family f) {
    switch (f) {
        case Family::MLP: return kWidthGrid;
        case Family::CNN: return iota_grid(1, 32);
        case Family::VIT: return iota_grid(1, 16);
    }
    throw ValidationError("unknown family in capacity grid lookup");
}

int ExperimentPlan::effective_repetitions(Family f) const {
    TrainConfig tc = train;
    tc.repetitions = repetitions;
    return tc.effective_repetitions(f);
}

const std::vector<std::int64_t>& ExperimentPlan::capacity_grid(Family f) const {
    static const std::map<Family, std::vector<std::int64_t>> defaults = {
        {Family::MLP, default_capacity_grid(Family::MLP)},
        {Family::CNN, default_capacity_grid(Family::CNN)},
        {Family::VIT, default_capacity_grid(Family::VIT)},
    };
    auto it = capacities.find(f);
    if (it != capacities.end()) return it->second;
    return defaults.at(f);
}

void ExperimentPlan::validate() const {
    if (id.empty()) throw ValidationError("plan field 'id' must be non-empty");
    if (id.find('|') != std::string::npos || id.find('\n') != std::string::npos)
        throw ValidationError("plan field 'id' must not contain '|' or newlines");
    if (datasets.empty()) throw ValidationError("plan field 'datasets' must be non-empty");
    for (const auto& d : datasets)
        if (!kKnownDatasets.count(d))
            throw ValidationError("plan field 'datasets' names unknown dataset '" + d + "'");
    if (families.empty()) throw ValidationError("plan field 'families' must be non-empty");
    for (const auto& [fam, grid] : capacities)
        check_grid(grid, "capacities." + family_str(fam));
    if (phase == Phase::FIRST_PHASE) {
        for (Family f : families)
            if (f != Family::MLP)
                throw ValidationError(
                    "plan field 'families': FIRST_PHASE enumerates MLP topologies only");
        if (first_phase_layers < 1 || first_phase_layers > 4)
            throw ValidationError("plan field 'first_phase_layers' must lie in 1..4");
    } else {
        if (depths.empty()) throw ValidationError("plan field 'depths' must be non-empty");
        for (std::size_t i = 0; i < depths.size(); ++i) {
            if (depths[i] < 1 || depths[i] > 4)
                throw ValidationError("plan field 'depths' entries must lie in 1..4");
            if (i > 0 && depths[i] <= depths[i - 1])
                throw ValidationError("plan field 'depths' must be strictly increasing");
        }
    }
    if (repetitions < 0) throw ValidationError("plan field 'repetitions' must be >= 0");
    train.validate();
    if (thresholds.std_tau <= 0 || thresholds.gain_tau <= 0 || thresholds.overfit_tau <= 0 ||
        thresholds.prune_delta <= 0)
        throw ValidationError("plan field 'thresholds' entries must be positive");
    if (!prune_rates.empty()) validate_prune_rates(prune_rates);
}

namespace {

// Pull a field out of the document, enforcing its JSON type; a name ending
// in a dot means "anything under this prefix was already validated".
template <typename T>
T take(const json& j, const std::string& field, T fallback) {
    if (!j.contains(field)) return fallback;
    try {
        return j.at(field).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("plan field '" + field + "' has the wrong type");
    }
}

void reject_unknown_keys(const json& j, const std::set<std::string>& known,
                         const std::string& scope) {
    for (const auto& [key, value] : j.items())
        if (!known.count(key))
            throw ValidationError("unknown plan field '" + scope + key + "'");
}

}  // namespace

ExperimentPlan plan_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("plan is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ValidationError("plan document must be a JSON object");

    reject_unknown_keys(j, {"version", "id", "phase", "datasets", "families", "capacities",
                            "depths", "first_phase_layers", "repetitions", "base_seed",
                            "train", "thresholds", "prune_rates"},
                        "");
    const int version = take<int>(j, "version", -1);
    if (version != kPlanVersion)
        throw ValidationError("plan field 'version' must be " + std::to_string(kPlanVersion));

    ExperimentPlan p;
    p.id = take<std::string>(j, "id", "");
    p.phase = phase_parse(take<std::string>(j, "phase", "SECOND_PHASE"));
    p.datasets = take<std::vector<std::string>>(j, "datasets", {});
    for (const auto& name : take<std::vector<std::string>>(j, "families", {}))
        p.families.push_back(family_parse(name));
    if (j.contains("capacities")) {
        const json& caps = j.at("capacities");
        if (!caps.is_object())
            throw ValidationError("plan field 'capacities' must map family to grid");
        for (const auto& [fam_name, grid] : caps.items()) {
            Family f = family_parse(fam_name);
            try {
                p.capacities[f] = grid.get<std::vector<std::int64_t>>();
            } catch (const json::exception&) {
                throw ValidationError("plan field 'capacities." + fam_name +
                                      "' must be an integer array");
            }
        }
    }
    p.depths = take<std::vector<int>>(j, "depths", p.depths);
    p.first_phase_layers = take<int>(j, "first_phase_layers", p.first_phase_layers);
    p.repetitions = take<int>(j, "repetitions", p.repetitions);
    p.base_seed = take<std::uint64_t>(j, "base_seed", p.base_seed);

    if (j.contains("train")) {
        const json& t = j.at("train");
        if (!t.is_object()) throw ValidationError("plan field 'train' must be an object");
        reject_unknown_keys(t, {"batch_size", "learning_rate", "epochs", "beta1", "beta2",
                                "epsilon", "validation_fraction"},
                            "train.");
        p.train.batch_size = take<std::int64_t>(t, "batch_size", p.train.batch_size);
        p.train.learning_rate = take<float>(t, "learning_rate", p.train.learning_rate);
        p.train.epochs = take<int>(t, "epochs", p.train.epochs);
        p.train.beta1 = take<float>(t, "beta1", p.train.beta1);
        p.train.beta2 = take<float>(t, "beta2", p.train.beta2);
        p.train.epsilon = take<float>(t, "epsilon", p.train.epsilon);
        p.train.validation_fraction =
            take<double>(t, "validation_fraction", p.train.validation_fraction);
    }

    if (j.contains("thresholds")) {
        const json& t = j.at("thresholds");
        if (!t.is_object()) throw ValidationError("plan field 'thresholds' must be an object");
        reject_unknown_keys(t, {"std_tau", "gain_tau", "overfit_tau", "prune_delta"},
                            "thresholds.");
        p.thresholds.std_tau = take<double>(t, "std_tau", p.thresholds.std_tau);
        p.thresholds.gain_tau = take<double>(t, "gain_tau", p.thresholds.gain_tau);
        p.thresholds.overfit_tau = take<double>(t, "overfit_tau", p.thresholds.overfit_tau);
        p.thresholds.prune_delta = take<double>(t, "prune_delta", p.thresholds.prune_delta);
    }
    p.prune_rates = take<std::vector<double>>(j, "prune_rates", {});

    p.validate();
    return p;
}

std::string plan_to_json(const ExperimentPlan& plan) {
    plan.validate();
    json j;
    j["version"] = kPlanVersion;
    j["id"] = plan.id;
    j["phase"] = phase_str(plan.phase);
    j["datasets"] = plan.datasets;
    json fams = json::array();
    for (Family f : plan.families) fams.push_back(family_str(f));
    j["families"] = fams;
    if (!plan.capacities.empty()) {
        json caps = json::object();
        for (const auto& [fam, grid] : plan.capacities) caps[family_str(fam)] = grid;
        j["capacities"] = caps;
    }
    j["depths"] = plan.depths;
    j["first_phase_layers"] = plan.first_phase_layers;
    j["repetitions"] = plan.repetitions;
    j["base_seed"] = plan.base_seed;
    j["train"] = {{"batch_size", plan.train.batch_size},
                  {"learning_rate", plan.train.learning_rate},
                  {"epochs", plan.train.epochs},
                  {"beta1", plan.train.beta1},
                  {"beta2", plan.train.beta2},
                  {"epsilon", plan.train.epsilon},
                  {"validation_fraction", plan.train.validation_fraction}};
    j["thresholds"] = {{"std_tau", plan.thresholds.std_tau},
                       {"gain_tau", plan.thresholds.gain_tau},
                       {"overfit_tau", plan.thresholds.overfit_tau},
                       {"prune_delta", plan.thresholds.prune_delta}};
    if (!plan.prune_rates.empty()) j["prune_rates"] = plan.prune_rates;
    return j.dump(2) + "\n";
}

ExperimentPlan load_plan(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigurationError("cannot open plan file " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return plan_from_json(ss.str());
}

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::string seed_identity(const RunDescriptor& d) {
    std::ostringstream ss;
    ss << "phase=" << phase_str(d.phase) << "|dataset=" << d.spec.dataset
       << "|family=" << family_str(d.spec.family) << "|capacity=" << d.spec.capacity
       << "|layers=" << d.spec.hidden_layers << "|pattern=" << d.spec.pattern.str()
       << "|rep=" << d.repetition;
    return ss.str();
}

std::string content_identity(const std::string& plan_id, const RunDescriptor& d) {
    return "plan=" + plan_id + "|" + seed_identity(d) + "|variant=" + d.variant;
}

namespace {

void finalize(const ExperimentPlan& plan, RunDescriptor& d) {
    d.run_seed = Rng::splitmix(Rng::splitmix(plan.base_seed) ^ fnv1a64(seed_identity(d)));
    d.spec.init_seed = d.run_seed;
    d.identity = content_identity(plan.id, d);
    d.content_key = fnv1a64(d.identity);
}

}  // namespace

std::vector<RunDescriptor> expand_plan(const ExperimentPlan& plan) {
    plan.validate();
    std::vector<RunDescriptor> out;

    for (const auto& dataset : plan.datasets) {
        for (Family family : plan.families) {
            const int reps = plan.effective_repetitions(family);

            std::vector<ModelSpec> specs;
            if (plan.phase == Phase::FIRST_PHASE) {
                const auto& grid = plan.capacity_grid(family);
                for (auto& s : enumerate_first_phase(plan.first_phase_layers))
                    if (std::find(grid.begin(), grid.end(), s.capacity) != grid.end())
                        specs.push_back(s);
            } else if (family == Family::MLP) {
                for (int depth : plan.depths) {
                    for (std::int64_t cap : plan.capacity_grid(family)) {
                        ModelSpec s;
                        s.family = family;
                        s.capacity = cap;
                        s.hidden_layers = depth;
                        s.pattern.relations.assign(static_cast<std::size_t>(depth - 1),
                                                   Relation::EQUAL);
                        specs.push_back(s);
                    }
                }
            } else {
                for (std::int64_t cap : plan.capacity_grid(family)) {
                    ModelSpec s;
                    s.family = family;
                    s.capacity = cap;
                    specs.push_back(s);
                }
            }

            for (auto& spec : specs) {
                spec.dataset = dataset;
                spec.family = family;
                for (int rep = 0; rep < reps; ++rep) {
                    RunDescriptor d;
                    d.spec = spec;
                    d.phase = plan.phase;
                    d.repetition = rep;
                    d.variant = "fp32";
                    finalize(plan, d);
                    out.push_back(d);
                    if (plan.phase == Phase::QUANT) {
                        RunDescriptor q = d;
                        q.variant = "qat";
                        finalize(plan, q);  // same seed identity, new content key
                        out.push_back(q);
                    }
                }
            }
        }
    }
    return out;
}

}  // namespace nnprof
