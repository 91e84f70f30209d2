#include "prefplan/planner.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "regrasp_fixture.hpp"
#include "test_util.hpp"

using namespace prefplan;
using planner::PlannerConfig;
using planner::PlanSkeleton;
using planner::SkeletonStep;

namespace {

PlanSkeleton singlePick(const std::string& obj, const std::string& pref) {
    PlanSkeleton skeleton;
    SkeletonStep step;
    step.primitive = world::parsePrimitiveCall("pick(" + obj + ")");
    step.preference = dsl::parse(pref);
    skeleton.steps = {step};
    return skeleton;
}

// Exhaustive coarse grid over a 1-step task, 20 points per dimension; the
// independent optimum used by the near-optimality checks.
double gridOptimum(const world::WorldState& state, const PlanSkeleton& skeleton) {
    const int dims = world::actionDim(skeleton.steps[0].primitive.kind);
    const int n = 20;
    std::vector<int> idx(dims, 0);
    double best = 0.0;
    while (true) {
        world::Action a;
        a.params.resize(dims);
        for (int d = 0; d < dims; ++d) a.params[d] = -1.0 + 2.0 * idx[d] / (n - 1);
        const double q = world::feasibility(state, skeleton.steps[0].primitive, a);
        double f = 1.0;
        if (q > 0.0) {
            const auto ctx = dsl::EvalContext::forSkill(state, skeleton.steps[0].primitive, a);
            f = dsl::evaluate(skeleton.steps[0].preference, ctx);
        }
        best = std::max(best, q * f);
        int d = 0;
        while (d < dims && ++idx[d] == n) idx[d++] = 0;
        if (d == dims) break;
    }
    return best;
}

}  // namespace

TEST(Shoot, SinglePickNearGridOptimum) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    const auto skeleton = singlePick("box_red", "threshold(0.0, -1.0)");
    const double grid = gridOptimum(scenario.initial, skeleton);
    EXPECT_GE(grid, 0.99);

    PlannerConfig config;
    config.seed = 3;
    const auto result = planner::shoot(scenario.initial, skeleton, config);
    EXPECT_GE(result.factors[0].q, 0.99);
    EXPECT_GE(result.objective, 0.95 * grid);
    EXPECT_EQ(result.actions.size(), 1u);
    EXPECT_EQ(result.trace.size(), 2u);
    EXPECT_GT(result.evaluations, 0u);
}

TEST(Shoot, UnsatisfiablePreferenceGivesZero) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    // threshold(0, 1) is 0 everywhere: 0 >= 1 never holds.
    const auto skeleton = singlePick("box_red", "threshold(0.0, 1.0)");
    PlannerConfig config;
    const auto result = planner::shoot(scenario.initial, skeleton, config);
    EXPECT_EQ(result.objective, 0.0);
    EXPECT_EQ(result.actions.size(), 1u);  // incumbent reported regardless
}

TEST(Shoot, ScalingConstantsDoNotChangeActions) {
    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    const auto skeleton = singlePick(
        "box_red",
        "normal(positionNorm(getPose(next_state,'ee','world'), "
        "getPose(next_state,'box_blue','world')), 0.3, 0.2, direction=false)");
    PlannerConfig config;
    config.seed = 11;
    const auto base = planner::shoot(scenario.initial, skeleton, config);
    config.c_task = 2.0;  // out of the documented (0,1] range but legal for the invariance check
    config.c_ctrl = 0.25;
    const auto scaled = planner::shoot(scenario.initial, skeleton, config);
    ASSERT_EQ(base.actions.size(), scaled.actions.size());
    for (size_t t = 0; t < base.actions.size(); ++t) {
        EXPECT_EQ(base.actions[t].params, scaled.actions[t].params);
    }
    EXPECT_NEAR(scaled.objective, 2.0 * 0.25 * base.objective, 1e-12);
}

TEST(Shoot, DeterministicAcrossRunsAndThreads) {
    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    const auto skeleton = singlePick("box_red", "threshold(0.0, -1.0)");
    PlannerConfig config;
    config.seed = 77;
    config.num_samples = 256;
    const auto a = planner::shoot(scenario.initial, skeleton, config);
    const auto b = planner::shoot(scenario.initial, skeleton, config);
    config.threads = 4;
    const auto c = planner::shoot(scenario.initial, skeleton, config);
    EXPECT_EQ(a.actions[0].params, b.actions[0].params);
    EXPECT_EQ(a.actions[0].params, c.actions[0].params);
    EXPECT_EQ(a.objective, b.objective);
    EXPECT_EQ(a.objective, c.objective);
}

TEST(Shoot, IncumbentMonotoneInIterations) {
    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    const auto skeleton = singlePick(
        "box_red",
        "normal(positionNorm(getPose(next_state,'ee','world'), "
        "getPose(next_state,'box_blue','world')), 0.25, 0.1, direction=false)");
    PlannerConfig config;
    config.seed = 5;
    config.num_samples = 128;
    double prev = -1.0;
    for (int iters = 0; iters <= 4; ++iters) {
        config.cem_iterations = iters;
        const auto r = planner::shoot(scenario.initial, skeleton, config);
        EXPECT_GE(r.objective, prev - 1e-15) << iters;
        prev = r.objective;
    }
}

TEST(Shoot, FirstStepPreconditionFailureIsError) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    PlanSkeleton skeleton;
    SkeletonStep step;
    step.primitive = world::parsePrimitiveCall("place(box_red, table)");  // nothing held
    skeleton.steps = {step};
    PlannerConfig config;
    EXPECT_THROW(planner::shoot(scenario.initial, skeleton, config), world::PreconditionError);
}

TEST(ScorePlan, MatchesIndependentRecomputation) {
    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    PlanSkeleton skeleton;
    SkeletonStep pick;
    pick.primitive = world::parsePrimitiveCall("pick(box_red)");
    pick.preference = dsl::parse(
        "normal(positionNorm(getPose(next_state,'ee','world'), "
        "getPose(next_state,'box_blue','world')), 0.3, 0.15, direction=false)");
    SkeletonStep place;
    place.primitive = world::parsePrimitiveCall("place(box_red, table)");
    place.preference = dsl::parse(
        "linear(positionNorm(getPose(next_state,'box_red','world'), "
        "getPose(next_state,'box_blue','world'), norm='L2', axis=['x','y']), 0.1, 0.6, "
        "direction=false)");
    skeleton.steps = {pick, place};

    PlannerConfig config;
    config.c_task = 0.9;
    config.c_ctrl = 0.8;
    rng::Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<world::Action> actions = {
            world::sampleAction(world::PrimitiveKind::kPick, rng),
            world::sampleAction(world::PrimitiveKind::kPlace, rng)};
        const auto rec = planner::scorePlan(scenario.initial, skeleton, actions, config);

        // Independent recomputation through world + dsl.
        double product = 1.0;
        world::WorldState s = scenario.initial;
        for (size_t t = 0; t < skeleton.steps.size(); ++t) {
            const double q = world::feasibility(s, skeleton.steps[t].primitive, actions[t]);
            const auto ctx = dsl::EvalContext::forSkill(s, skeleton.steps[t].primitive, actions[t]);
            const double f = dsl::evaluate(skeleton.steps[t].preference, ctx);
            EXPECT_NEAR(rec.factors[t].q, q, 1e-12);
            EXPECT_NEAR(rec.factors[t].f, f, 1e-12);
            product *= q * f;
            s = world::transition(s, skeleton.steps[t].primitive, actions[t]);
        }
        EXPECT_NEAR(rec.product, 0.9 * 0.8 * product, 1e-12);
        EXPECT_EQ(rec.trace.size(), 3u);
    }
}

// Decomposition identity at deterministic transitions: the rollout product
// equals preference evaluation on independently re-simulated states,
// exactly.
TEST(ScorePlan, DecompositionExactUnderResimulation) {
    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    PlannerConfig config;
    rng::Rng rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        PlanSkeleton skeleton;
        SkeletonStep pick;
        pick.primitive = world::parsePrimitiveCall("pick(box_red)");
        pick.preference = dsl::parse(
            "normal(positionNorm(getPose(next_state,'box_red','world'), "
            "getPose(next_state,'box_blue','world')), 0.4, 0.2, direction=false)");
        SkeletonStep place;
        place.primitive = world::parsePrimitiveCall("place(box_red, table)");
        place.preference = dsl::parse(
            "normal(positionNorm(getPose(next_state,'box_red','world'), "
            "getPose(state,'box_blue','world')), 0.3, 0.2, direction=false)");
        SkeletonStep pick2;
        pick2.primitive = world::parsePrimitiveCall("pick(box_blue)");
        pick2.preference = dsl::parse(
            "normal(greatCircleDistance(getPose(next_state,'ee','world'), "
            "getPose(next_state,'box_red','world')), 0.8, 0.5, direction=false)");
        skeleton.steps = {pick, place, pick2};

        std::vector<world::Action> actions = {
            world::sampleAction(world::PrimitiveKind::kPick, rng),
            world::sampleAction(world::PrimitiveKind::kPlace, rng),
            world::sampleAction(world::PrimitiveKind::kPick, rng)};
        const auto rec = planner::scorePlan(scenario.initial, skeleton, actions, config);

        // Fresh re-simulation of the same actions.
        double product = 1.0;
        world::WorldState s = scenario.initial;
        for (size_t t = 0; t < skeleton.steps.size(); ++t) {
            world::WorldState next = world::transition(s, skeleton.steps[t].primitive, actions[t]);
            const auto ctx = dsl::EvalContext::withNextState(s, next);
            product *= dsl::evaluate(skeleton.steps[t].preference, ctx);
            s = std::move(next);
        }
        double rec_f = 1.0;
        for (const auto& fac : rec.factors) rec_f *= fac.f;
        EXPECT_EQ(rec_f, product);  // bitwise: deterministic transitions
    }
}

TEST(ScorePlan, ErrorsCarryStepIndex) {
    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    PlanSkeleton skeleton;
    SkeletonStep pick;
    pick.primitive = world::parsePrimitiveCall("pick(box_red)");
    SkeletonStep pick_again;
    pick_again.primitive = world::parsePrimitiveCall("pick(box_blue)");  // still holding
    skeleton.steps = {pick, pick_again};
    std::vector<world::Action> actions = {world::Action{{0, 0, 0, 0}}, world::Action{{0, 0, 0, 0}}};
    PlannerConfig config;
    try {
        planner::scorePlan(scenario.initial, skeleton, actions, config);
        FAIL() << "expected PlanningError";
    } catch (const planner::PlanningError& e) {
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
    }
    EXPECT_THROW(planner::scorePlan(scenario.initial, skeleton, {world::Action{{0, 0, 0, 0}}},
                                    config),
                 std::invalid_argument);
}

TEST(Shoot, ProductDominanceBound) {
    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    const auto skeleton = singlePick(
        "box_red",
        "normal(positionNorm(getPose(next_state,'ee','world'), "
        "getPose(next_state,'box_blue','world')), 0.3, 0.2, direction=false)");
    PlannerConfig config;
    config.seed = 9;
    const auto r = planner::shoot(scenario.initial, skeleton, config);
    double min_q = 1.0, min_f = 1.0;
    for (const auto& fac : r.factors) {
        min_q = std::min(min_q, fac.q);
        min_f = std::min(min_f, fac.f);
    }
    EXPECT_LE(r.objective, config.c_task * config.c_ctrl * min_q + 1e-12);
    EXPECT_LE(r.objective, config.c_task * config.c_ctrl * min_f + 1e-12);
}

TEST(GreedyStep, SingleCandidateReducesToScaledShoot) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    planner::GreedyCandidate cand;
    cand.primitive = world::parsePrimitiveCall("pick(box_red)");
    cand.s_task = 0.37;
    PlannerConfig config;
    config.seed = 2;
    const auto result = planner::greedyStep(scenario.initial, {cand}, config);
    EXPECT_EQ(result.candidate_index, 0);
    EXPECT_NEAR(result.objective, 0.37 * result.best_fq, 1e-15);
    EXPECT_GE(result.best_fq, 0.99);  // centroid grasp reachable
}

TEST(GreedyStep, StaskDominanceOnEqualLandscapes) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    planner::GreedyCandidate a, b;
    a.primitive = b.primitive = world::parsePrimitiveCall("pick(box_red)");
    a.s_task = 0.9;
    b.s_task = 0.1;
    PlannerConfig config;
    const auto result = planner::greedyStep(scenario.initial, {a, b}, config);
    EXPECT_EQ(result.candidate_index, 0);
}

// The worked trade-off: candidate A has s_task 0.6 but its best F*Q is
// capped at 0.2 by a constant preference factor; candidate B has s_task
// 0.3 with best F*Q 0.9. B must win (0.27 > 0.12). The per-candidate
// optima are confirmed against the exhaustive grid.
TEST(GreedyStep, TradesTaskScoreAgainstGeometry) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    planner::GreedyCandidate a;
    a.primitive = world::parsePrimitiveCall("pick(box_red)");
    a.s_task = 0.6;
    a.preference = dsl::parse("AND(0.2, threshold(0.0, -1.0))");
    planner::GreedyCandidate b;
    b.primitive = world::parsePrimitiveCall("pick(box_red)");
    b.s_task = 0.3;
    b.preference = dsl::parse("AND(0.9, threshold(0.0, -1.0))");

    PlanSkeleton ga = singlePick("box_red", "AND(0.2, threshold(0.0, -1.0))");
    PlanSkeleton gb = singlePick("box_red", "AND(0.9, threshold(0.0, -1.0))");
    const double grid_a = gridOptimum(scenario.initial, ga);
    const double grid_b = gridOptimum(scenario.initial, gb);
    EXPECT_NEAR(grid_a, 0.2, 1e-9);
    EXPECT_NEAR(grid_b, 0.9, 1e-9);

    PlannerConfig config;
    config.seed = 4;
    const auto result = planner::greedyStep(scenario.initial, {a, b}, config);
    EXPECT_EQ(result.candidate_index, 1);
    EXPECT_NEAR(result.objective, 0.3 * 0.9, 1e-3);
    EXPECT_GE(result.best_fq, 0.95 * grid_b);
}

TEST(GreedyStep, SkipsInapplicableCandidates) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    planner::GreedyCandidate bad;
    bad.primitive = world::parsePrimitiveCall("place(box_red, table)");  // not held
    bad.s_task = 0.99;
    planner::GreedyCandidate good;
    good.primitive = world::parsePrimitiveCall("pick(box_red)");
    good.s_task = 0.01;
    PlannerConfig config;
    const auto result = planner::greedyStep(scenario.initial, {bad, good}, config);
    EXPECT_EQ(result.candidate_index, 1);
    EXPECT_THROW(planner::greedyStep(scenario.initial, {}, config), std::invalid_argument);
    EXPECT_THROW(planner::greedyStep(scenario.initial, {bad}, config), planner::PlanningError);
}

TEST(PlanAndExecute, HappyPathHasNoGreedySteps) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    const auto skeleton = singlePick("box_red", "threshold(0.0, -1.0)");
    PlannerConfig config;
    config.seed = 1;
    const auto trace = planner::planAndExecute(
        scenario.initial, [&](const world::WorldState&) { return skeleton; },
        [](const world::WorldState&, int) { return std::vector<planner::GreedyCandidate>{}; },
        config);
    EXPECT_TRUE(trace.success);
    EXPECT_TRUE(trace.greedy_steps.empty());
    EXPECT_EQ(trace.shoot_attempts.size(), 1u);
    EXPECT_EQ(trace.executed.size(), 1u);
    EXPECT_GT(trace.final_objective, config.zero_objective_eps);
    EXPECT_TRUE(trace.executed[0].verify.completed);
}

TEST(PlanAndExecute, ExhaustsGreedyBudgetOnUnsatisfiablePreference) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    const auto skeleton = singlePick("box_red", "threshold(0.0, 1.0)");  // identically 0
    planner::GreedyCandidate cand;
    cand.primitive = world::parsePrimitiveCall("pick(box_red)");
    PlannerConfig config;
    config.num_samples = 64;
    config.cem_iterations = 1;
    int candidate_requests = 0;
    try {
        planner::planAndExecute(
            scenario.initial,
            [&](const world::WorldState& s) {
                // After a greedy pick the hand is full: ask for a place with
                // the same unsatisfiable preference so every shoot scores 0.
                if (s.held) {
                    PlanSkeleton sk;
                    SkeletonStep step;
                    step.primitive = world::parsePrimitiveCall("place(box_red, table)");
                    step.preference = dsl::parse("threshold(0.0, 1.0)");
                    sk.steps = {step};
                    return sk;
                }
                return skeleton;
            },
            [&](const world::WorldState& s, int) {
                ++candidate_requests;
                if (s.held) {
                    planner::GreedyCandidate place;
                    place.primitive = world::parsePrimitiveCall("place(box_red, table)");
                    return std::vector<planner::GreedyCandidate>{place};
                }
                return std::vector<planner::GreedyCandidate>{cand};
            },
            config);
        FAIL() << "expected GreedyBudgetExhausted";
    } catch (const planner::GreedyBudgetExhausted& e) {
        EXPECT_EQ(e.trace.greedy_steps.size(), size_t(planner::kMaxGreedySteps));
        EXPECT_EQ(candidate_requests, planner::kMaxGreedySteps);
        EXPECT_FALSE(e.trace.success);
    }
}

// The re-grasp recovery: direct shooting is structurally 0, one greedy
// handle pick, then the 3-step re-shoot succeeds.
TEST(PlanAndExecute, RegraspFallbackSmoke) {
    const auto scenario = testutil::loadText(testutil::regraspScenario());
    PlannerConfig config;
    config.seed = 0;
    config.num_samples = 2048;
    const auto trace =
        planner::planAndExecute(scenario.initial, testutil::regraspSkeletonSource(),
                                testutil::regraspCandidateSource(), config);
    EXPECT_TRUE(trace.success);
    ASSERT_EQ(trace.shoot_attempts.size(), 2u);
    EXPECT_LE(trace.shoot_attempts[0].objective, config.zero_objective_eps);
    EXPECT_EQ(trace.greedy_steps.size(), 1u);
    EXPECT_GT(trace.final_objective, config.zero_objective_eps);
    EXPECT_EQ(trace.executed.size(), 4u);  // greedy pick + place + pick + handover
}

TEST(SkeletonJson, RoundTripAndValidation) {
    const auto scenario = testutil::loadText(testutil::twoBoxScenario());
    const std::string text = R"json({
      "steps": [
        {"primitive": "pick(box_red)", "pref": "threshold(0.0, -1.0)",
         "mode": "stop", "preset": "coexistence"},
        {"primitive": "place(box_red, table)",
         "pref": "linear(positionNorm(getPose(next_state,'box_red','world'), getPose(next_state,'box_blue','world')), 0.1, 0.5, direction=false)",
         "mode": "contact", "preset": "beginner"}
      ]
    })json";
    const auto skeleton = planner::skeletonFromJson(text, scenario.initial);
    EXPECT_EQ(skeleton.horizon(), 2);
    EXPECT_EQ(skeleton.steps[1].mode, safety::ControllerMode::kContact);
    const auto reparsed = planner::skeletonFromJson(planner::skeletonToJson(skeleton),
                                                    scenario.initial);
    EXPECT_EQ(reparsed.horizon(), 2);
    EXPECT_TRUE(reparsed.steps[1].preference == skeleton.steps[1].preference);

    // Unknown object in a preference is rejected with a diagnostic.
    EXPECT_THROW(planner::skeletonFromJson(R"json({"steps":[{"primitive":"pick(box_red)",
      "pref":"threshold(positionNorm(getPose(state,'ghost','world'), getPose(state,'box_red','world')), 0.1)"}]})json",
                                           scenario.initial),
                 std::invalid_argument);
    EXPECT_THROW(planner::skeletonFromJson(R"({"steps":[]})", scenario.initial),
                 std::invalid_argument);
}

TEST(Serialization, PlanResultJsonIsDeterministic) {
    const auto scenario = testutil::loadText(testutil::boxOnTableScenario());
    const auto skeleton = singlePick("box_red", "threshold(0.0, -1.0)");
    PlannerConfig config;
    config.seed = 42;
    config.num_samples = 128;
    const auto r1 = planner::shoot(scenario.initial, skeleton, config);
    const auto r2 = planner::shoot(scenario.initial, skeleton, config);
    EXPECT_EQ(planner::planResultToJson(r1, scenario.initial, skeleton, config.seed),
              planner::planResultToJson(r2, scenario.initial, skeleton, config.seed));
    const auto json = planner::planResultToJson(r1, scenario.initial, skeleton, config.seed);
    EXPECT_NE(json.find("\"objective\""), std::string::npos);
    EXPECT_NE(json.find("\"grasp_dx\""), std::string::npos);
    EXPECT_NE(json.find("\"trace_digests\""), std::string::npos);
    EXPECT_EQ(json.find("elapsed"), std::string::npos);  // timing never in primary output
}
