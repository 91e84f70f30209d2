#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "prefplan/llm.hpp"
#include "prefplan/planner.hpp"
#include "prefplan/world.hpp"

namespace prefplan::ablation {

/// The four agents of the rearrangement study. They share the identical
/// sampler and CEM loop; only the sequence scoring rule differs.
enum class Agent {
    kBaseline1,  // prod_t Q_t
    kBaseline2,  // sum_t (Q_t + F_t), generated preferences
    kOracle,     // prod_t Q_t F*_t, hand-crafted preferences
    kOurs,       // prod_t Q_t F_t, generated preferences
};

std::string agentName(Agent agent);
Agent agentFromName(const std::string& name);

struct TrialSpec {
    std::string task_id;
    world::Scenario scenario;
    std::string instruction;
    std::vector<std::string> plan_lines;     // fixed task plan, one call per line
    std::vector<std::string> control_lines;  // "<mode> <preset>" per step
    std::vector<std::string> oracle_pref_sources;
    bool trivial_oracle = false;
    std::string orientation_definition;
    std::string canned_response;  // authored model output backing the fixtures

    planner::PlanSkeleton baseSkeleton() const;  // fixed plan, preferences left trivial
};

struct Suite {
    std::vector<TrialSpec> tasks;

    const TrialSpec& byId(const std::string& id) const;
};

/// Suite JSON: {"tasks":[{"id","scenario","instruction","plan":[...],
/// "control":[...],"oracle_prefs":[...],"trivial_oracle"?,"orientation",
/// "response"}]}. Scenario paths resolve relative to base_dir.
Suite loadSuite(const std::string& json_text, const std::filesystem::path& base_dir);

struct AblationConfig {
    std::vector<Agent> agents{Agent::kBaseline1, Agent::kBaseline2, Agent::kOracle, Agent::kOurs};
    int rollouts = 100;
    std::uint64_t seed = 0;
    planner::PlannerConfig planner;
    int bootstrap_samples = 10000;
    int threads = 1;
    std::filesystem::path fixtures_dir;
    int examples_per_prompt = 3;
};

struct RolloutRecord {
    int rollout = 0;
    bool success = false;      // all hard feasibility conditions along the rollout
    double oracle_pref = 0.0;  // prod_t F*_t on the executed states/actions
    double objective = 0.0;    // the agent's own score of its plan
};

struct CellReport {
    std::string agent;
    std::string task;
    double success_mean = 0.0;
    double pref_mean = 0.0;
    double success_ci_lo = 0.0, success_ci_hi = 0.0;
    double pref_ci_lo = 0.0, pref_ci_hi = 0.0;
    int n = 0;
    std::vector<RolloutRecord> rollouts;
};

struct AblationReport {
    std::vector<CellReport> cells;

    const CellReport& cell(const std::string& agent, const std::string& task) const;
    /// Header exactly: agent,task,success_mean,pref_mean,ci_lo,ci_hi,n
    /// (the CI columns bound pref_mean; both CI pairs are in the JSON).
    std::string toCsv() const;
    std::string toJson() const;
    std::string rolloutsCsv() const;
    /// gnuplot-ready whisker rows: index, agent, task, mean, lo, hi per metric.
    std::string whiskerData() const;
};

/// The prompt used for a task's preference generation: 3 in-context
/// examples drawn from the other tasks (seeded), fixed plan and controls.
llm::PromptBundle taskPrompt(const Suite& suite, size_t task_index, const AblationConfig& config);

/// Record the suite's canned responses under the exact prompts the
/// ablation will issue. Returns the number of fixtures written.
int generateFixtures(const Suite& suite, const AblationConfig& config, llm::FixtureStore& store);

AblationReport runAblation(const Suite& suite, const AblationConfig& config);

/// Percentile bootstrap CI of the mean (clamped to bracket the mean).
std::pair<double, double> bootstrapCi(const std::vector<double>& values, int resamples,
                                      std::uint64_t seed);

/// Uniform object-pose jitter within the scenario-declared ranges;
/// rejection-samples interpenetration-free states.
world::WorldState jitterState(const world::Scenario& scenario, rng::Rng& rng);

}  // namespace prefplan::ablation
