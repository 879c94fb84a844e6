#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nnprof/analysis.hpp"
#include "nnprof/models.hpp"
#include "nnprof/trainer.hpp"

namespace nnprof {

// The three workflow stages plus the topology-enumeration warm-up.
enum class Phase { FIRST_PHASE, SECOND_PHASE, PRUNE, QUANT };

std::string phase_str(Phase p);
Phase phase_parse(const std::string& s);

// Declarative description of one experiment: which datasets and families to
// run, over which capacity grids, how many seeded repetitions, and the
// training/analysis knobs. Loaded from a versioned JSON document.
struct ExperimentPlan {
    std::string id;
    Phase phase = Phase::SECOND_PHASE;
    std::vector<std::string> datasets;
    std::vector<Family> families;
    // Per-family capacity grid; a missing entry falls back to the family
    // default (MLP width grid, CNN channels 1..32, ViT dims 1..16).
    std::map<Family, std::vector<std::int64_t>> capacities;
    std::vector<int> depths = {1, 2, 3, 4};  // MLP hidden layer counts (non-first phases)
    int first_phase_layers = 4;              // L for FIRST_PHASE topology enumeration
    int repetitions = 0;                     // 0 -> family default (30 MLP, 10 CNN/ViT)
    std::uint64_t base_seed = 1;
    TrainConfig train;
    AnalysisThresholds thresholds;
    std::vector<double> prune_rates;  // PRUNE; empty -> the 10%..100% grid

    void validate() const;
    const std::vector<std::int64_t>& capacity_grid(Family f) const;
    int effective_repetitions(Family f) const;
};

std::vector<std::int64_t> default_capacity_grid(Family f);

// JSON round trip; parse errors and schema violations raise ValidationError
// naming the offending field.
ExperimentPlan plan_from_json(const std::string& text);
std::string plan_to_json(const ExperimentPlan& plan);
ExperimentPlan load_plan(const std::string& path);

// One unit of work: a model spec plus the run coordinates that identify and
// seed it. QUANT expands each tuple into an fp32/qat pair sharing run_seed,
// distinguished only by variant (and therefore content key).
struct RunDescriptor {
    ModelSpec spec;
    Phase phase = Phase::SECOND_PHASE;
    std::string variant = "fp32";  // fp32 | qat
    int repetition = 0;            // 0-based seed index
    std::uint64_t run_seed = 0;
    std::uint64_t content_key = 0;
    std::string identity;  // canonical string behind content_key
};

// Canonical descriptor string. The seed identity excludes both the plan id
// (so renamed reruns reproduce numerics) and the variant (so the fp32/qat
// pair trains from identical initialization); the content key includes both.
std::string seed_identity(const RunDescriptor& d);
std::string content_identity(const std::string& plan_id, const RunDescriptor& d);

std::uint64_t fnv1a64(const std::string& s);

// Deterministic, order-stable cross product of the plan's grids.
std::vector<RunDescriptor> expand_plan(const ExperimentPlan& plan);

}  // namespace nnprof
