#include <benchmark/benchmark.h>

#include "prefplan/planner.hpp"
#include "bench_common.hpp"

using namespace prefplan;

namespace {

planner::PlanSkeleton pickPlaceSkeleton() {
    planner::PlanSkeleton skeleton;
    planner::SkeletonStep pick;
    pick.primitive = world::parsePrimitiveCall("pick(box_red)");
    planner::SkeletonStep place;
    place.primitive = world::parsePrimitiveCall("place(box_red, table)");
    place.preference = dsl::parse(
        "normal(positionNorm(getPose(next_state,'box_red','world'), "
        "getPose(next_state,'box_blue','world'), norm='L2', axis=['x','y']), 0.2, 0.1, "
        "direction=false)");
    skeleton.steps = {pick, place};
    return skeleton;
}

void BM_ShootPickPlace(benchmark::State& state) {
    const auto scenario = bench::twoBoxScenario();
    const auto skeleton = pickPlaceSkeleton();
    planner::PlannerConfig config;
    config.num_samples = static_cast<int>(state.range(0));
    config.cem_iterations = 2;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        config.seed = seed++;
        benchmark::DoNotOptimize(planner::shoot(scenario.initial, skeleton, config));
    }
}
BENCHMARK(BM_ShootPickPlace)->Arg(128)->Arg(512)->Arg(2048)->Unit(benchmark::kMillisecond);

void BM_ScorePlan(benchmark::State& state) {
    const auto scenario = bench::twoBoxScenario();
    const auto skeleton = pickPlaceSkeleton();
    planner::PlannerConfig config;
    std::vector<world::Action> actions = {world::Action{{0.1, 0.0, 0.0, 0.3}},
                                          world::Action{{0.05, -0.1, 0.2}}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(planner::scorePlan(scenario.initial, skeleton, actions, config));
    }
}
BENCHMARK(BM_ScorePlan);

}  // namespace
