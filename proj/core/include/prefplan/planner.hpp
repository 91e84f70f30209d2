#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "prefplan/dsl.hpp"
#include "prefplan/safety.hpp"
#include "prefplan/world.hpp"

namespace prefplan::planner {

class PlanningError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One step of a task skeleton: primitive, its preference function and the
/// controller assignment.
struct SkeletonStep {
    world::PrimitiveInstance primitive;
    dsl::PreferenceExpr preference = dsl::alwaysTrue();
    safety::ControllerMode mode = safety::ControllerMode::kStop;
    std::string preset = "coexistence";
    safety::ControllerParams params = safety::presetParams(safety::Preset::kCoexistence);
};

struct PlanSkeleton {
    std::vector<SkeletonStep> steps;

    int horizon() const { return static_cast<int>(steps.size()); }
};

struct PlannerConfig {
    int num_samples = 1024;
    int cem_iterations = 4;
    double elite_fraction = 0.1;
    double cem_smoothing = 0.5;
    std::uint64_t seed = 0;
    double zero_objective_eps = 1e-6;  // the "objective is zero" test
    double c_task = 1.0;
    double c_ctrl = 1.0;
    int greedy_budget = 4;  // candidates requested per fallback (L)
    int threads = 1;        // 0 = hardware concurrency
};

/// Hard cap on greedy fallbacks per planAndExecute call.
inline constexpr int kMaxGreedySteps = 5;

struct StepScore {
    double q = 1.0;
    double f = 1.0;
};

struct PlanResult {
    std::vector<world::Action> actions;
    std::vector<StepScore> factors;
    double objective = 0.0;  // c_task * c_ctrl * prod_t q_t f_t
    std::vector<world::WorldState> trace;  // s_1 .. s_{H+1}
    std::uint64_t evaluations = 0;
    double elapsed_seconds = 0.0;
};

/// Custom sequence objective; the ablation baselines swap the scoring rule
/// while reusing the identical sampler and CEM loop.
struct SequenceObjective {
    bool evaluate_preferences = true;
    bool early_zero_break = true;  // multiplicative objectives may stop at 0
    std::function<double(const std::vector<StepScore>&)> score;
};

PlanResult optimizeSequence(const world::WorldState& state, const PlanSkeleton& skeleton,
                            const PlannerConfig& config, const SequenceObjective& objective);

/// Shooting: jointly optimize all actions of the skeleton against
/// c_task * c_ctrl * prod_t F_t(s_t, a_t) Q_t(s_t, a_t) with
/// s_{t+1} = transition(s_t, phi_t, a_t). Random shooting followed by CEM
/// refinement; reports the incumbent best even when the objective is 0.
PlanResult shoot(const world::WorldState& state, const PlanSkeleton& skeleton,
                 const PlannerConfig& config);

struct GreedyCandidate {
    world::PrimitiveInstance primitive;
    double s_task = 1.0;  // task-preference probability for this candidate
    dsl::PreferenceExpr preference = dsl::alwaysTrue();
    safety::ControllerMode mode = safety::ControllerMode::kStop;
    std::string preset = "coexistence";
    safety::ControllerParams params = safety::presetParams(safety::Preset::kCoexistence);
    double ctrl_const = 1.0;  // per-candidate control constant
};

/// Fully instantiated skill.
struct Skill {
    world::PrimitiveInstance primitive;
    world::Action action;
    safety::ControllerMode mode = safety::ControllerMode::kStop;
    safety::ControllerParams params;
};

struct GreedyResult {
    Skill skill;
    double objective = 0.0;  // s_task * ctrl_const * best F*Q
    int candidate_index = -1;
    double best_fq = 0.0;
};

/// One-step fallback: maximize s_task^l * ctrl^l * F^l(s,a) * Q^l(s,a)
/// jointly over candidates and actions; ties broken by candidate order.
/// Candidates whose preconditions fail in `state` score 0.
GreedyResult greedyStep(const world::WorldState& state,
                        const std::vector<GreedyCandidate>& candidates,
                        const PlannerConfig& config);

struct ScoreRecord {
    double c_task = 1.0;
    double c_ctrl = 1.0;
    std::vector<StepScore> factors;
    double product = 0.0;  // c_task * c_ctrl * prod factors
    std::vector<world::WorldState> trace;
};

/// Audit record: re-rolls the given actions and reports every factor of
/// the objective decomposition.
ScoreRecord scorePlan(const world::WorldState& state, const PlanSkeleton& skeleton,
                      const std::vector<world::Action>& actions, const PlannerConfig& config);

using SkeletonSource = std::function<PlanSkeleton(const world::WorldState&)>;
using CandidateSource = std::function<std::vector<GreedyCandidate>(const world::WorldState&, int)>;

struct ExecutedStep {
    Skill skill;
    bool greedy = false;
    safety::VerifyResult verify;
    std::uint64_t post_digest = 0;
};

struct ExecutionTrace {
    struct Attempt {
        int horizon = 0;
        double objective = 0.0;
    };
    std::vector<Attempt> shoot_attempts;
    std::vector<GreedyResult> greedy_steps;
    std::vector<ExecutedStep> executed;
    PlanResult final_plan;
    double final_objective = 0.0;
    bool success = false;
};

/// Thrown when the greedy fallback budget runs out; carries the partial
/// trace for reporting.
class GreedyBudgetExhausted : public PlanningError {
public:
    GreedyBudgetExhausted(const std::string& message, ExecutionTrace t)
        : PlanningError(message), trace(std::move(t)) {}
    ExecutionTrace trace;
};

/// The execute loop: shoot; on success run the whole sequence through
/// world transitions and the safety shield; otherwise take one greedy
/// step, apply it, request a fresh skeleton, and repeat. Fails after
/// kMaxGreedySteps fallbacks.
ExecutionTrace planAndExecute(const world::WorldState& state, const SkeletonSource& skeletons,
                              const CandidateSource& candidates, const PlannerConfig& config,
                              const safety::ReachParams& reach = {},
                              const safety::HumanStream& human = nullptr);

/// Skeleton (plan file) JSON:
/// {"steps":[{"primitive":"pick(obj)","pref":"<dsl>","mode":"stop","preset":"coexistence"}]}
PlanSkeleton skeletonFromJson(const std::string& text, const world::WorldState& state);
std::string skeletonToJson(const PlanSkeleton& skeleton);

std::string planResultToJson(const PlanResult& result, const world::WorldState& initial,
                             const PlanSkeleton& skeleton, std::uint64_t seed);
std::string executionTraceToJson(const ExecutionTrace& trace, const world::WorldState& initial,
                                 std::uint64_t seed);

}  // namespace prefplan::planner
