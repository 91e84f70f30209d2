#include "prefplan/planner.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

#include "prefplan/parallel.hpp"
#include "json_util.hpp"

namespace prefplan::planner {

namespace {

int totalDims(const PlanSkeleton& skeleton) {
    int d = 0;
    for (const auto& step : skeleton.steps) d += world::actionDim(step.primitive.kind);
    return d;
}

std::vector<world::Action> splitActions(const PlanSkeleton& skeleton,
                                        const std::vector<double>& flat) {
    std::vector<world::Action> out;
    out.reserve(skeleton.steps.size());
    size_t offset = 0;
    for (const auto& step : skeleton.steps) {
        const int d = world::actionDim(step.primitive.kind);
        world::Action a;
        a.params.assign(flat.begin() + offset, flat.begin() + offset + d);
        out.push_back(std::move(a));
        offset += d;
    }
    return out;
}

// Roll the skeleton forward and collect per-step factors. The predicted
// next state is computed once per step and shared between the transition
// and the preference evaluation, which makes the per-step decomposition
// exact under the deterministic transition model.
std::vector<StepScore> rolloutFactors(const world::WorldState& state, const PlanSkeleton& skeleton,
                                      const std::vector<world::Action>& actions,
                                      const SequenceObjective& objective,
                                      std::vector<world::WorldState>* trace) {
    std::vector<StepScore> factors;
    factors.reserve(skeleton.steps.size());
    world::WorldState s = state;
    if (trace) trace->push_back(s);
    for (size_t t = 0; t < skeleton.steps.size(); ++t) {
        const auto& step = skeleton.steps[t];
        StepScore score;
        score.q = world::feasibility(s, step.primitive, actions[t]);
        if (objective.early_zero_break && score.q == 0.0 && !trace) {
            factors.push_back(score);
            break;
        }
        world::WorldState next = world::transition(s, step.primitive, actions[t]);
        if (objective.evaluate_preferences) {
            const auto ctx = dsl::EvalContext::withNextState(s, next);
            score.f = dsl::evaluate(step.preference, ctx);
        }
        factors.push_back(score);
        if (objective.early_zero_break && score.q * score.f == 0.0 && !trace) break;
        s = std::move(next);
        if (trace) trace->push_back(s);
    }
    return factors;
}

double productScore(const std::vector<StepScore>& factors) {
    double p = 1.0;
    for (const auto& f : factors) p *= f.q * f.f;
    return p;
}

struct Incumbent {
    double score = -std::numeric_limits<double>::infinity();
    std::vector<double> flat;
};

}  // namespace

PlanResult optimizeSequence(const world::WorldState& state, const PlanSkeleton& skeleton,
                            const PlannerConfig& config, const SequenceObjective& objective) {
    if (skeleton.steps.empty()) throw PlanningError("empty skeleton");
    // Surface first-step precondition failures as errors up front; later
    // steps are symbolically determined by the skeleton itself.
    world::checkPreconditions(state, skeleton.steps.front().primitive);

    const auto t_start = std::chrono::steady_clock::now();
    const int dims = totalDims(skeleton);
    const int n = std::max(1, config.num_samples);
    const int elites = std::max(1, static_cast<int>(std::ceil(config.elite_fraction * n)));

    std::vector<std::vector<double>> samples(n, std::vector<double>(dims));
    std::vector<double> scores(n);
    std::atomic<std::uint64_t> evaluations{0};

    auto evaluateBatch = [&]() {
        parallelFor(n, config.threads, [&](int i) {
            const auto actions = splitActions(skeleton, samples[i]);
            const auto factors = rolloutFactors(state, skeleton, actions, objective, nullptr);
            scores[i] = objective.score(factors);
            evaluations.fetch_add(1, std::memory_order_relaxed);
        });
    };

    Incumbent best;
    auto absorb = [&]() {
        for (int i = 0; i < n; ++i) {
            if (scores[i] > best.score) {
                best.score = scores[i];
                best.flat = samples[i];
            }
        }
    };

    // Random shooting pass.
    {
        rng::Rng gen(rng::deriveSeed(config.seed, rng::hashBytes("shoot"), 0ULL));
        for (auto& s : samples) {
            for (double& c : s) c = gen.uniform(-1.0, 1.0);
        }
        evaluateBatch();
        absorb();
    }

    // CEM refinement.
    std::vector<double> mean(dims, 0.0), stddev(dims, 0.0);
    bool have_fit = false;
    std::vector<int> order(n);
    for (int iter = 1; iter <= config.cem_iterations; ++iter) {
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](int a, int b) { return scores[a] > scores[b]; });
        for (int d = 0; d < dims; ++d) {
            double m = 0.0;
            for (int e = 0; e < elites; ++e) m += samples[order[e]][d];
            m /= elites;
            double var = 0.0;
            for (int e = 0; e < elites; ++e) {
                const double diff = samples[order[e]][d] - m;
                var += diff * diff;
            }
            double sd = std::sqrt(var / elites);
            sd = std::max(sd, 0.02);  // keep exploring
            if (have_fit) {
                mean[d] = config.cem_smoothing * mean[d] + (1.0 - config.cem_smoothing) * m;
                stddev[d] = config.cem_smoothing * stddev[d] + (1.0 - config.cem_smoothing) * sd;
            } else {
                mean[d] = m;
                stddev[d] = sd;
            }
        }
        have_fit = true;

        rng::Rng gen(rng::deriveSeed(config.seed, rng::hashBytes("shoot"),
                                     static_cast<std::uint64_t>(iter)));
        for (auto& s : samples) {
            for (int d = 0; d < dims; ++d) {
                s[d] = std::clamp(mean[d] + stddev[d] * gen.normal(), -1.0, 1.0);
            }
        }
        evaluateBatch();
        absorb();
    }

    PlanResult result;
    result.actions = splitActions(skeleton, best.flat);
    SequenceObjective full = objective;
    full.early_zero_break = false;
    result.factors = rolloutFactors(state, skeleton, result.actions, full, &result.trace);
    result.objective = objective.score(result.factors);
    result.evaluations = evaluations.load();
    result.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

PlanResult shoot(const world::WorldState& state, const PlanSkeleton& skeleton,
                 const PlannerConfig& config) {
    SequenceObjective objective;
    objective.score = productScore;
    PlanResult result = optimizeSequence(state, skeleton, config, objective);
    result.objective = config.c_task * config.c_ctrl * productScore(result.factors);
    return result;
}

GreedyResult greedyStep(const world::WorldState& state,
                        const std::vector<GreedyCandidate>& candidates,
                        const PlannerConfig& config) {
    if (candidates.empty()) throw std::invalid_argument("greedyStep: empty candidate list");

    GreedyResult best;
    for (size_t l = 0; l < candidates.size(); ++l) {
        const auto& cand = candidates[l];
        PlanSkeleton one;
        one.steps.push_back({cand.primitive, cand.preference, cand.mode, cand.preset, cand.params});
        PlannerConfig inner = config;
        inner.seed = rng::deriveSeed(config.seed, rng::hashBytes("greedy"),
                                     static_cast<std::uint64_t>(l));
        double best_fq = 0.0;
        std::vector<world::Action> actions;
        try {
            SequenceObjective objective;
            objective.score = productScore;
            const PlanResult r = optimizeSequence(state, one, inner, objective);
            best_fq = r.objective;
            actions = r.actions;
        } catch (const world::PreconditionError&) {
            continue;  // symbolically inapplicable candidate scores 0
        }
        const double total = cand.s_task * cand.ctrl_const * best_fq;
        if (best.candidate_index < 0 || total > best.objective) {
            best.objective = total;
            best.best_fq = best_fq;
            best.candidate_index = static_cast<int>(l);
            best.skill = Skill{cand.primitive,
                               actions.empty() ? world::Action{} : actions.front(), cand.mode,
                               cand.params};
        }
    }
    if (best.candidate_index < 0) {
        throw PlanningError("greedyStep: no candidate is applicable in this state");
    }
    return best;
}

ScoreRecord scorePlan(const world::WorldState& state, const PlanSkeleton& skeleton,
                      const std::vector<world::Action>& actions, const PlannerConfig& config) {
    if (actions.size() != skeleton.steps.size()) {
        throw std::invalid_argument("scorePlan: skeleton and action counts differ");
    }
    ScoreRecord rec;
    rec.c_task = config.c_task;
    rec.c_ctrl = config.c_ctrl;
    SequenceObjective objective;
    objective.early_zero_break = false;
    objective.score = productScore;
    try {
        rec.factors = rolloutFactors(state, skeleton, actions, objective, &rec.trace);
    } catch (const world::PreconditionError& e) {
        throw PlanningError(std::string("scorePlan: precondition failure at step ") +
                            std::to_string(rec.trace.size()) + ": " + e.what());
    }
    rec.product = rec.c_task * rec.c_ctrl * productScore(rec.factors);
    return rec;
}

namespace {

safety::HumanStream staticHuman(const world::WorldState& state) {
    if (!state.human) return nullptr;
    const auto kps = state.human->keypoints;
    return [kps](double) { return kps; };
}

ExecutedStep executeSkill(world::WorldState& s, const Skill& skill, bool greedy,
                          const safety::ReachParams& reach, const safety::HumanStream& human) {
    world::WorldState next = world::transition(s, skill.primitive, skill.action);
    const auto traj = safety::planLinearTrajectory(s.ee_pose, next.ee_pose, skill.params);
    ExecutedStep out;
    out.skill = skill;
    out.greedy = greedy;
    out.verify = safety::verifyAndScale(traj, skill.mode, skill.params, reach,
                                        human ? human : staticHuman(s));
    out.post_digest = world::stateDigest(next);
    s = std::move(next);
    return out;
}

}  // namespace

ExecutionTrace planAndExecute(const world::WorldState& state, const SkeletonSource& skeletons,
                              const CandidateSource& candidates, const PlannerConfig& config,
                              const safety::ReachParams& reach, const safety::HumanStream& human) {
    ExecutionTrace trace;
    world::WorldState s = state;
    int greedy_count = 0;
    while (true) {
        const PlanSkeleton skeleton = skeletons(s);
        PlanResult r = shoot(s, skeleton, config);
        trace.shoot_attempts.push_back({skeleton.horizon(), r.objective});
        if (r.objective > config.zero_objective_eps) {
            for (size_t t = 0; t < skeleton.steps.size(); ++t) {
                const auto& step = skeleton.steps[t];
                trace.executed.push_back(executeSkill(
                    s, Skill{step.primitive, r.actions[t], step.mode, step.params}, false, reach,
                    human));
            }
            trace.final_plan = std::move(r);
            trace.final_objective = trace.final_plan.objective;
            trace.success = true;
            return trace;
        }
        if (greedy_count >= kMaxGreedySteps) {
            throw GreedyBudgetExhausted("planAndExecute: greedy fallback budget exhausted (" +
                                            std::to_string(kMaxGreedySteps) + " steps)",
                                        std::move(trace));
        }
        const auto cands = candidates(s, config.greedy_budget);
        if (cands.empty()) throw PlanningError("planAndExecute: candidate source returned nothing");
        PlannerConfig greedy_config = config;
        greedy_config.seed =
            rng::deriveSeed(config.seed, rng::hashBytes("fallback"),
                            static_cast<std::uint64_t>(greedy_count));
        GreedyResult g = greedyStep(s, cands, greedy_config);
        trace.executed.push_back(executeSkill(s, g.skill, true, reach, human));
        trace.greedy_steps.push_back(std::move(g));
        ++greedy_count;
    }
}

namespace {

nlohmann::json actionJson(const world::WorldState& state, const world::PrimitiveInstance& prim,
                          const world::Action& action) {
    nlohmann::json j;
    j["primitive"] = world::primitiveName(prim.kind);
    j["object"] = prim.object;
    if (prim.kind == world::PrimitiveKind::kPlace) j["surface"] = prim.surface;
    j["normalized"] = action.params;
    nlohmann::json phys;
    for (const auto& [name, value] : world::physicalParams(state, prim, action)) {
        phys[name] = value;
    }
    j["physical"] = std::move(phys);
    return j;
}

char hexDigit(unsigned v) { return v < 10 ? char('0' + v) : char('a' + v - 10); }

std::string digestHex(std::uint64_t d) {
    std::string out = "0x";
    for (int i = 15; i >= 0; --i) out += hexDigit((d >> (4 * i)) & 0xf);
    return out;
}

}  // namespace

PlanSkeleton skeletonFromJson(const std::string& text, const world::WorldState& state) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::invalid_argument(std::string("plan file: ") + e.what());
    }
    const auto catalog = world::makeCatalog(state);
    PlanSkeleton skeleton;
    try {
        for (const auto& sj : j.at("steps")) {
            SkeletonStep step;
            step.primitive = world::parsePrimitiveCall(sj.at("primitive").get<std::string>());
            if (sj.contains("pref")) {
                step.preference = dsl::parse(sj.at("pref").get<std::string>());
                const auto diags = dsl::typecheck(step.preference, catalog);
                if (!diags.empty()) {
                    throw std::invalid_argument("plan file: preference invalid: " +
                                                diags.front().render());
                }
            }
            if (sj.contains("mode")) {
                step.mode = safety::modeFromName(sj.at("mode").get<std::string>());
            }
            if (sj.contains("preset")) {
                step.preset = sj.at("preset").get<std::string>();
                step.params = safety::presetParams(safety::presetFromName(step.preset));
            }
            skeleton.steps.push_back(std::move(step));
        }
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("plan file: ") + e.what());
    }
    if (skeleton.steps.empty()) throw std::invalid_argument("plan file: no steps");
    return skeleton;
}

std::string skeletonToJson(const PlanSkeleton& skeleton) {
    nlohmann::json j;
    auto& steps = j["steps"] = nlohmann::json::array();
    for (const auto& step : skeleton.steps) {
        nlohmann::json sj;
        sj["primitive"] = step.primitive.label();
        sj["pref"] = dsl::prettyPrint(step.preference);
        sj["mode"] = safety::modeName(step.mode);
        sj["preset"] = step.preset;
        steps.push_back(std::move(sj));
    }
    return j.dump(2);
}

std::string planResultToJson(const PlanResult& result, const world::WorldState& initial,
                             const PlanSkeleton& skeleton, std::uint64_t seed) {
    nlohmann::json j;
    j["seed"] = seed;
    j["objective"] = result.objective;
    auto& actions = j["actions"] = nlohmann::json::array();
    for (size_t t = 0; t < result.actions.size(); ++t) {
        const world::WorldState& s_t = t < result.trace.size() ? result.trace[t] : initial;
        actions.push_back(actionJson(s_t, skeleton.steps[t].primitive, result.actions[t]));
    }
    auto& steps = j["steps"] = nlohmann::json::array();
    for (const auto& f : result.factors) {
        steps.push_back(nlohmann::json{{"q", f.q}, {"f", f.f}});
    }
    auto& digests = j["trace_digests"] = nlohmann::json::array();
    for (const auto& s : result.trace) digests.push_back(digestHex(world::stateDigest(s)));
    j["stats"] = {{"evaluations", result.evaluations}};
    return j.dump(2);
}

std::string executionTraceToJson(const ExecutionTrace& trace, const world::WorldState& initial,
                                 std::uint64_t seed) {
    nlohmann::json j;
    j["seed"] = seed;
    j["success"] = trace.success;
    j["final_objective"] = trace.final_objective;
    auto& attempts = j["shoot_attempts"] = nlohmann::json::array();
    for (const auto& a : trace.shoot_attempts) {
        attempts.push_back(nlohmann::json{{"horizon", a.horizon}, {"objective", a.objective}});
    }
    auto& greedy = j["greedy_steps"] = nlohmann::json::array();
    for (const auto& g : trace.greedy_steps) {
        greedy.push_back(nlohmann::json{{"primitive", g.skill.primitive.label()},
                                        {"objective", g.objective},
                                        {"candidate_index", g.candidate_index}});
    }
    auto& executed = j["executed"] = nlohmann::json::array();
    world::WorldState s = initial;
    for (const auto& e : trace.executed) {
        nlohmann::json ej = actionJson(s, e.skill.primitive, e.skill.action);
        ej["greedy"] = e.greedy;
        ej["post_digest"] = digestHex(e.post_digest);
        ej["trajectory_points"] = e.verify.trajectory.points.size();
        ej["safety_events"] = e.verify.events.size();
        ej["completed"] = e.verify.completed;
        executed.push_back(std::move(ej));
        s = world::transition(s, e.skill.primitive, e.skill.action);
    }
    if (!trace.final_plan.actions.empty()) {
        auto& steps = j["steps"] = nlohmann::json::array();
        for (const auto& f : trace.final_plan.factors) {
            steps.push_back(nlohmann::json{{"q", f.q}, {"f", f.f}});
        }
    }
    return j.dump(2);
}

}  // namespace prefplan::planner
