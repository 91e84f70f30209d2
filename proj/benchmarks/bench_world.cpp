#include <benchmark/benchmark.h>

#include "prefplan/collision.hpp"
#include "bench_common.hpp"

using namespace prefplan;

namespace {

void BM_Transition(benchmark::State& state) {
    const auto scenario = bench::twoBoxScenario();
    const auto prim = world::parsePrimitiveCall("pick(box_red)");
    world::Action action;
    action.params = {0.1, -0.2, 0.0, 0.4};
    for (auto _ : state) {
        benchmark::DoNotOptimize(world::transition(scenario.initial, prim, action));
    }
}
BENCHMARK(BM_Transition);

void BM_Feasibility(benchmark::State& state) {
    const auto scenario = bench::twoBoxScenario();
    const auto prim = world::parsePrimitiveCall("pick(box_red)");
    world::Action action;
    action.params = {0.1, -0.2, 0.0, 0.4};
    for (auto _ : state) {
        benchmark::DoNotOptimize(world::feasibility(scenario.initial, prim, action));
    }
}
BENCHMARK(BM_Feasibility);

void BM_SeparationBoxBox(benchmark::State& state) {
    const auto a = world::Shape::box({0.1, 0.1, 0.1});
    const auto pa = geom::makePose({0, 0, 0}, Eigen::Quaterniond::Identity());
    const auto pb = geom::makePose({0.15, 0.05, 0.02},
                                   geom::axisAngle(Eigen::Vector3d(1, 1, 0), 0.4));
    for (auto _ : state) {
        benchmark::DoNotOptimize(collision::separation(a, pa, a, pb));
    }
}
BENCHMARK(BM_SeparationBoxBox);

void BM_StateDigest(benchmark::State& state) {
    const auto scenario = bench::twoBoxScenario();
    for (auto _ : state) {
        benchmark::DoNotOptimize(world::stateDigest(scenario.initial));
    }
}
BENCHMARK(BM_StateDigest);

}  // namespace
